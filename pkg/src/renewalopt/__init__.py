"""Renewal premium optimisation for insurance portfolios.

Choose a premium change for every policy so that the expected renewed
premium volume is maximal while the expected retention stays above a floor.
"""

from .exceptions import InfeasibleError, RenewalOptError, SolverError, ValidationError
from .mdnlp import MdnlpConfig, MdnlpResult, enumerate_exact, mdnlp_solve, solve_choice_problem
from .models import (
    TABLE1,
    DiscreteProbTable,
    Ma,
    Mb,
    Mc,
    approximate_mb_by_ma,
    fit_quadratic_to_table,
    psi,
    psi_derivatives,
)
from .objectives import (
    DEFAULT_GRID,
    Constraints,
    DiscreteGrid,
    FeasibilityReport,
    RoundingConfig,
    feasible,
    mc_oracle,
    q_dif,
    q_var,
    q_vol,
    retention,
    rounded,
)
from .portfolio import (
    MOTOR_CALIBRATION,
    Calibration,
    Policy,
    Portfolio,
    PremiumSplit,
    generate_synthetic,
    load_portfolio,
    save_portfolio,
    split_portfolio,
)
from .qp import KktCertificate, QpProblem, assemble_qp, solve_qp, solve_qp_dense, solve_volume_variance
from .scenarios import (
    Scenario,
    ScenarioReport,
    SplitReport,
    emit_report,
    run_scenario,
    run_split_scenario,
    run_toy_model,
)
from .simulation import SimConfig, SimPrior, prior_from_solution, sim_optimize, uniform_prior_for_floor
from .sqp import (
    SqpConfig,
    build_problem_ma_cubic,
    build_problem_mb,
    build_problem_retention_max,
    sqp_solve,
)
from .tariff import RiskPoint, TariffStructure, evaluate_tariff, fit_tariff

__version__ = "0.1.0"

__all__ = [
    "Calibration", "Constraints", "DEFAULT_GRID", "DiscreteGrid", "DiscreteProbTable",
    "FeasibilityReport", "InfeasibleError", "KktCertificate", "MOTOR_CALIBRATION", "Ma", "Mb",
    "Mc", "MdnlpConfig", "MdnlpResult", "Policy", "Portfolio", "PremiumSplit", "QpProblem",
    "RenewalOptError", "RiskPoint", "RoundingConfig", "Scenario", "ScenarioReport", "SimConfig",
    "SimPrior", "SolverError", "SplitReport", "SqpConfig", "TABLE1", "TariffStructure",
    "ValidationError", "approximate_mb_by_ma", "assemble_qp", "build_problem_ma_cubic",
    "build_problem_mb", "build_problem_retention_max", "emit_report", "enumerate_exact",
    "evaluate_tariff", "feasible", "fit_quadratic_to_table", "fit_tariff", "generate_synthetic",
    "load_portfolio", "mc_oracle", "mdnlp_solve", "prior_from_solution", "psi", "psi_derivatives",
    "q_dif", "q_var", "q_vol", "retention", "rounded", "run_scenario", "run_split_scenario",
    "run_toy_model", "save_portfolio", "sim_optimize", "solve_choice_problem", "solve_qp",
    "solve_qp_dense", "solve_volume_variance", "split_portfolio", "sqp_solve",
    "uniform_prior_for_floor",
]
