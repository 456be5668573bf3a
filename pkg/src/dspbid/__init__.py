"""Joint bid and allocation planning for a demand-side platform.

Campaign prices from a Lagrangian dual set per-edge bids; a small LP (or
Frank-Wolfe for quadratic spend targets) then allocates impressions. A
vectorized simulator replays impression streams under the resulting plan or
a greedy baseline.
"""
__version__ = "0.1.0"

from .auction import (BetaCurve, BidLandscape, ConditionReport, DomainError, EstimationError,
                      LandscapeError, ScaledFirstPrice, SecondPriceBeta, TabulatedEmpirical,
                      UniformCompetitors, WinCurve, beta_pay, check_theorem_conditions, h,
                      landscape_from_dict, monte_carlo_beta, optimal_bid, rho)
from .dual import (DualEvaluation, SolveConfig, SolveResult, SolverFailure, eval_Q, minimize_Q,
                   psi, subgradient)
from .experiments import experiment_budget_sweep, experiment_penalty_sweep
from .ingestion import (LogRecord, build_instance, count_supply, fit_beta_landscape, fit_ctr,
                        read_log, write_log)
from .instance import (Campaign, ConfigurationError, Edge, ImpressionType, Instance, Plan,
                       Violation, expected_profit, expected_spend, load_instance, objective,
                       plan_violations, save_instance, validate)
from .recovery import (RecoveryConfig, RecoveryResult, TwoPhaseResult, build_allocation_problem,
                       fix_bids, recover, solve_quadratic_recovery, two_phase)
from .simplex import LinearProgram, LPResult, solve_lp
from .simulator import (ImpressionEvent, SimConfig, SimReport, generate_stream, run_greedy,
                        run_mpc, run_two_phase)
from .utility import BudgetCap, QuadraticTarget, SpendRange, UtilityDomainError, utility_from_dict

__all__ = [
    "BetaCurve",
    "BidLandscape",
    "BudgetCap",
    "Campaign",
    "ConditionReport",
    "ConfigurationError",
    "DomainError",
    "DualEvaluation",
    "Edge",
    "EstimationError",
    "ImpressionEvent",
    "ImpressionType",
    "Instance",
    "LPResult",
    "LandscapeError",
    "LinearProgram",
    "LogRecord",
    "Plan",
    "QuadraticTarget",
    "RecoveryConfig",
    "RecoveryResult",
    "ScaledFirstPrice",
    "SecondPriceBeta",
    "SimConfig",
    "SimReport",
    "SolveConfig",
    "SolveResult",
    "SolverFailure",
    "SpendRange",
    "TabulatedEmpirical",
    "TwoPhaseResult",
    "UniformCompetitors",
    "UtilityDomainError",
    "Violation",
    "WinCurve",
    "beta_pay",
    "build_allocation_problem",
    "build_instance",
    "check_theorem_conditions",
    "count_supply",
    "eval_Q",
    "expected_profit",
    "expected_spend",
    "experiment_budget_sweep",
    "experiment_penalty_sweep",
    "fit_beta_landscape",
    "fit_ctr",
    "fix_bids",
    "generate_stream",
    "h",
    "landscape_from_dict",
    "load_instance",
    "minimize_Q",
    "monte_carlo_beta",
    "objective",
    "optimal_bid",
    "plan_violations",
    "psi",
    "read_log",
    "recover",
    "rho",
    "run_greedy",
    "run_mpc",
    "run_two_phase",
    "save_instance",
    "solve_lp",
    "solve_quadratic_recovery",
    "subgradient",
    "two_phase",
    "utility_from_dict",
    "validate",
    "write_log",
]
