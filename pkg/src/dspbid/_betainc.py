"""Regularized incomplete beta function I_x(a, b).

Evaluated with the modified Lentz continued fraction (Numerical Recipes
``betacf``). ``a``, ``b`` and ``x`` broadcast against each other, so many
landscapes can be evaluated in a single call.
"""
import math

import numpy as np

_TINY = 1e-300
_lgamma = np.vectorize(math.lgamma, otypes=[float])


def _clamp(v):
    return np.where(np.abs(v) < _TINY, _TINY, v)


def _betacf(a, b, x, rtol, max_iter):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 / _clamp(1.0 - qab * x / qap)
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 / _clamp(1.0 + aa * d)
        c = _clamp(1.0 + aa / c)
        h = np.where(active, h * d * c, h)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 / _clamp(1.0 + aa * d)
        c = _clamp(1.0 + aa / c)
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= rtol
        if not active.any():
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a, b, x, rtol=1e-12, max_iter=2000):
    """Regularized incomplete beta ``I_x(a, b)`` for ``a, b > 0``.

    Arguments broadcast; ``x`` is clipped to [0, 1]. Returns a float when
    every argument is a scalar.
    """
    scalar = np.ndim(a) == np.ndim(b) == np.ndim(x) == 0
    a, b, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                                  np.clip(np.asarray(x, dtype=float), 0.0, 1.0))
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("shape parameters must be positive")
    out = np.where(x >= 1.0, 1.0, 0.0)
    inner = (x > 0.0) & (x < 1.0)
    if inner.any():
        ai, bi, xi = a[inner], b[inner], x[inner]
        lbeta = _lgamma(ai + bi) - _lgamma(ai) - _lgamma(bi)
        front = np.exp(lbeta + ai * np.log(xi) + bi * np.log1p(-xi))
        # the fraction converges fast only below the mean; use symmetry above it
        swap = xi >= (ai + 1.0) / (ai + bi + 2.0)
        pa = np.where(swap, bi, ai)
        pb = np.where(swap, ai, bi)
        px = np.where(swap, 1.0 - xi, xi)
        part = front * _betacf(pa, pb, px, rtol, max_iter) / pa
        out[inner] = np.clip(np.where(swap, 1.0 - part, part), 0.0, 1.0)
    return float(out) if scalar else out
