"""Command-line entry point.

Every subcommand writes its outputs plus a ``manifest.json`` into
``--out-dir``. Exit codes: 0 success, 1 domain failure (violations,
infeasible problems, failed checks), 2 usage or IO errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .auction import EstimationError, LandscapeError, check_theorem_conditions
from .dual import STEP_RULES, SolveConfig, SolverFailure
from .experiments import (BUDGET_FRACTIONS, PENALTY_MULTIPLIERS, experiment_budget_sweep,
                          experiment_penalty_sweep)
from .ingestion import build_instance, read_log
from .instance import ConfigurationError, Instance, Plan, save_instance, validate
from .recovery import two_phase
from .simulator import SimConfig, simulate

log = logging.getLogger("dspbid")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, rows, fields=None):
    if fields is None:
        fields = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _jsonable(r.get(k)) for k in fields})


def _load_instance(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None
    try:
        return Instance.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path} is not an instance file: missing or malformed {exc}") from None
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def _require_valid(instance):
    errors = [v for v in validate(instance) if v.severity == "error"]
    if errors:
        for v in errors:
            print(v, file=sys.stderr)
        raise ConfigurationError(f"instance has {len(errors)} violation(s)")


def _solve_config(args):
    return SolveConfig(max_iters=args.max_iters, step_rule=args.step_rule,
                       step_scale=args.step_scale, tol_rel=args.tol, seed=args.seed)


def condition_digest(instance, grid_size=512):
    out = {}
    for lid, land in instance.landscapes.items():
        rep = check_theorem_conditions(land, grid_size)
        out[lid] = {"passed": rep.passed, "rho_strictly_increasing": rep.rho_strictly_increasing,
                    "g_strictly_increasing": rep.g_strictly_increasing,
                    "witnesses": [float(w) for w in rep.witnesses[:5]]}
    return {"all_passed": all(v["passed"] for v in out.values()), "landscapes": out}


# -- subcommands ------------------------------------------------------------

def cmd_validate(args, out):
    inst = _load_instance(args.instance)
    found = validate(inst)
    for v in found:
        print(v)
    _write_json(out / "validation.json", [vars(v) for v in found])
    errors = sum(v.severity == "error" for v in found)
    return EXIT_DOMAIN if errors else EXIT_OK, ["validation.json"]


def _campaign_config(path):
    if path is None:
        return {}, {}, {}
    try:
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read campaign file {path}: {exc}") from None
    budgets, cpcs, utils = {}, {}, {}
    for cid, c in spec.items():
        if "budget" in c:
            budgets[cid] = float(c["budget"])
        if "cpc" in c:
            cpcs[cid] = float(c["cpc"])
        if "utility" in c:
            utils[cid] = dict(c["utility"])
    return budgets, cpcs, utils


def cmd_fit(args, out):
    try:
        records = read_log(args.log)
    except OSError as exc:
        raise UsageError(f"cannot read {args.log}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(f"{args.log}: {exc}") from None
    budgets, cpcs, utils = _campaign_config(args.campaigns)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        inst = build_instance(records, budgets, cpcs, utils, min_count=args.min_count,
                              mc_samples=args.mc_samples, grid=args.grid, seed=args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    target = Path(args.output) if args.output else out / "instance.json"
    save_instance(inst, target)
    print(f"{inst!r} written to {target}")
    return EXIT_OK, [str(target)]


def cmd_solve(args, out):
    inst = _load_instance(args.instance)
    _require_valid(inst)
    res = two_phase(inst, _solve_config(args))
    _write_csv(out / "history.csv",
               [dict(zip(("iter", "Q", "grad_norm", "step"), h)) for h in res.history],
               ["iter", "Q", "grad_norm", "step"])
    _write_json(out / "lambda.json", {c.id: float(l) for c, l in zip(inst.campaigns, res.lam)})
    summary = dict(res.summary())
    summary["iterations"] = len(res.history) - 1
    summary["conditions"] = condition_digest(inst)
    written = ["history.csv", "lambda.json", "summary.json"]
    if res.plan is None:
        summary["message"] = res.recovery.message
        summary["suggested_alpha"] = res.recovery.suggested_alpha
        _write_json(out / "summary.json", summary)
        print(f"recovery {res.status}: {res.recovery.message}", file=sys.stderr)
        return EXIT_DOMAIN, written
    _write_json(out / "plan.json", res.plan.to_records(inst))
    _write_json(out / "summary.json", summary)
    print(f"Q_best={res.q_best:.10g} F={res.f_recovered:.10g} gap={res.gap:.3g} "
          f"status={res.status}")
    return EXIT_OK, written + ["plan.json"]


def _load_plan(path, inst):
    try:
        with open(path, encoding="utf-8") as fh:
            return Plan.from_records(inst, json.load(fh))
    except OSError as exc:
        raise UsageError(f"cannot read plan {path}: {exc.strerror}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"{path} is not a plan file: {exc}") from None


def cmd_simulate(args, out):
    inst = _load_instance(args.instance)
    _require_valid(inst)
    cfg = SimConfig(seed=args.seed, replications=args.replications,
                    budget_fraction=args.budget_fraction, policy=args.policy,
                    resolve_every=args.resolve_every)
    plan = None
    if args.policy == "two_phase":
        if args.plan:
            plan = _load_plan(args.plan, inst)
        elif args.solve_inline:
            scaled = inst.with_budgets(inst.budgets * cfg.budget_fraction)
            res = two_phase(scaled, _solve_config(args))
            if res.plan is None:
                print(f"recovery {res.status}: {res.recovery.message}", file=sys.stderr)
                return EXIT_DOMAIN, []
            plan = res.plan
        elif args.resolve_every is None:
            raise UsageError("the two_phase policy needs --plan or --solve-inline")
    report = simulate(inst, plan, cfg)
    _write_csv(out / "simulation.csv", report.rows())
    _write_json(out / "simulation_summary.json", report.aggregate())
    agg = report.aggregate()
    print(f"{report.policy}: mean profit {agg['profit']:.6g} (sem {agg['profit_sem']:.3g}), "
          f"budget utilization {agg['budget_utilization']:.4f}")
    args.resolves = report.resolves
    return EXIT_OK, ["simulation.csv", "simulation_summary.json"]


def _budget_table(rows):
    """Metric rows by fraction columns."""
    metrics = [k for k in rows[0] if k != "fraction"]
    table = []
    for m in metrics:
        row = {"metric": m}
        for r in rows:
            row[f"{r['fraction']:g}"] = r[m]
        table.append(row)
    return table, ["metric"] + [f"{r['fraction']:g}" for r in rows]


def cmd_experiment(args, out):
    inst = _load_instance(args.instance)
    _require_valid(inst)
    cfg = SimConfig(seed=args.seed, replications=args.replications,
                    budget_fraction=args.budget_fraction)
    scfg = _solve_config(args)
    if args.kind == "budget_sweep":
        fractions = BUDGET_FRACTIONS if args.fractions is None else args.fractions
        if not fractions:
            raise UsageError("--fractions needs at least one value")
        rows = experiment_budget_sweep(inst, fractions, cfg, scfg)
        table, fields = _budget_table(rows)
        _write_csv(out / "budget_sweep.csv", table, fields)
        _write_json(out / "budget_sweep.json", rows)
        for r in rows:
            print(f"fraction {r['fraction']:g}: relative profit {r['relative_profit']:.3f}, "
                  f"relative b.u. {r['relative_bu']:.3f}, p={r['p_value']:.3g}")
        return EXIT_OK, ["budget_sweep.csv", "budget_sweep.json"]
    mults = PENALTY_MULTIPLIERS if args.multipliers is None else args.multipliers
    if not mults:
        raise UsageError("--multipliers needs at least one value")
    rows, summary = experiment_penalty_sweep(inst, mults, cfg, scfg)
    _write_csv(out / "penalty_sweep.csv", rows)
    _write_json(out / "penalty_sweep.json", {"rows": rows, "summary": summary})
    for r in rows:
        print(f"multiplier {r['multiplier']:g}: relative profit {r['relative_profit']:.3f}, "
              f"relative b.u. {r['relative_bu']:.3f}")
    return EXIT_OK, ["penalty_sweep.csv", "penalty_sweep.json"]


def cmd_check_conditions(args, out):
    inst = _load_instance(args.instance)
    digest = condition_digest(inst, args.grid_size)
    _write_json(out / "conditions.json", digest)
    for lid, rep in digest["landscapes"].items():
        state = "pass" if rep["passed"] else "FAIL"
        print(f"{lid}: {state}" + ("" if rep["passed"] else f" near bids {rep['witnesses']}"))
    return (EXIT_OK if digest["all_passed"] else EXIT_DOMAIN), ["conditions.json"]


# -- parser -------------------------------------------------------------------

def _fraction(text):
    if "/" in text:
        num, den = text.split("/", 1)
        value = float(num) / float(den)
    else:
        value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("fractions must be positive")
    return value


def _add_solver_flags(p):
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--step-rule", choices=STEP_RULES, default="halving_step_length")
    p.add_argument("--step-scale", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-6, help="relative stopping tolerance")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker cap (replications are vectorized in one process)")
    common.add_argument("--out-dir", default=".")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dspbid", parents=[common],
                                     description="Bid and allocation planning for a DSP.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check an instance file")
    p.add_argument("instance")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fit", parents=[common], help="build an instance from a log")
    p.add_argument("log")
    p.add_argument("-o", "--output", help="instance path (default OUT_DIR/instance.json)")
    p.add_argument("--min-count", type=int, default=5000)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--grid", type=int, default=128)
    p.add_argument("--campaigns", help="JSON {campaign_id: {cpc, budget, utility}}")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("solve", parents=[common], help="dual descent plus recovery")
    p.add_argument("instance")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", parents=[common], help="replay a policy")
    p.add_argument("instance")
    p.add_argument("--plan")
    p.add_argument("--policy", choices=("two_phase", "greedy"), default="two_phase")
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--budget-fraction", type=_fraction, default=1.0)
    p.add_argument("--resolve-every", type=int)
    p.add_argument("--solve-inline", action="store_true")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", parents=[common], help="budget or penalty sweep")
    p.add_argument("instance")
    p.add_argument("kind", choices=("budget_sweep", "penalty_sweep"))
    p.add_argument("--fractions", type=_fraction, nargs="*")
    p.add_argument("--multipliers", type=float, nargs="*")
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--budget-fraction", type=_fraction, default=1.0)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("check-conditions", parents=[common],
                       help="check the monotonicity conditions of every landscape")
    p.add_argument("instance")
    p.add_argument("--grid-size", type=int, default=512)
    p.set_defaults(func=cmd_check_conditions)
    return parser


def _manifest(args, argv, outputs, started, code):
    skip = {"func"}
    config = {k: v for k, v in vars(args).items() if k not in skip}
    inputs = [getattr(args, k) for k in ("instance", "log", "plan", "campaigns")
              if getattr(args, k, None)]
    return {"subcommand": args.command, "argv": list(argv), "inputs": inputs,
            "config": config, "version": __version__, "seed": args.seed,
            "threads": args.threads, "wall_clock_seconds": time.monotonic() - started,
            "outputs": outputs, "exit_code": code,
            "resolves": getattr(args, "resolves", None)}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.monotonic()
    out = Path(args.out_dir)
    outputs = []
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        out.mkdir(parents=True, exist_ok=True)
        code, outputs = args.func(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except (ConfigurationError, LandscapeError, EstimationError, SolverFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_DOMAIN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    try:
        _write_json(out / "manifest.json", _manifest(args, argv, outputs, started, code))
    except OSError as exc:
        print(f"error: cannot write manifest: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())
