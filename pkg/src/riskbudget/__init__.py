"""Risk budgeting portfolio construction under weight constraints.

Build a portfolio whose risk contributions match prescribed budgets, with
optional box, linear, and turnover constraints, via a logarithmic-barrier
formulation solved by coordinate descent or operator splitting.

Quick start::

    import numpy as np
    import riskbudget as rb

    u = rb.AssetUniverse(vol=np.array([0.1, 0.2, 0.3]),
                         corr=np.eye(3))
    report = rb.solve(u, rb.RiskParams(), rb.Budgets.equal(3))
    print(report.x, report.decomposition.rc_rel)
"""

from .baselines import (
    LeastSquaresResult,
    NaiveResult,
    derive_pins,
    least_squares_rb,
    naive_two_step,
    project_simplex,
)
from .constraints import (
    AffineEq,
    Box,
    Classification,
    ConstraintSet,
    ContainsReport,
    L1Ball,
    LinearIneq,
    classify,
    contains,
    project,
)
from .model import (
    AssetUniverse,
    Budgets,
    DegeneratePortfolioError,
    RiskDecomposition,
    RiskParams,
    ValidationError,
    covariance,
    decompose,
    estimate_max_sharpe,
    portfolio_vol,
    risk_measure,
    sharpe_ratio,
)
from .prox import (
    DykstraNonConvergence,
    dykstra,
    max_level,
    project_affine,
    project_box,
    project_halfspace,
    project_l1_ball,
    project_l2_ball,
    prox_l1,
    prox_l2,
    prox_linf,
    prox_log_barrier,
    prox_max,
)
from .io import (
    Problem,
    ProblemFormatError,
    emit_problem,
    format_table,
    load_problem,
    parse_problem,
    result_document,
    save_problem,
)
from .qp import QPInfeasible, QPResult, project_qp, solve_qp
from .solvers import (
    ConvergenceError,
    SelectionResult,
    SolveReport,
    SolverOptions,
    adaptive_penalty,
    admm,
    bisection,
    ccd_separable,
    ccd_unconstrained,
    coordinate_prox_update,
    default_start,
    kkt_multipliers,
    newton_unconstrained,
    select_best,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AffineEq",
    "AssetUniverse",
    "Box",
    "Budgets",
    "Classification",
    "ConstraintSet",
    "ContainsReport",
    "ConvergenceError",
    "DegeneratePortfolioError",
    "DykstraNonConvergence",
    "L1Ball",
    "LeastSquaresResult",
    "LinearIneq",
    "NaiveResult",
    "Problem",
    "ProblemFormatError",
    "QPInfeasible",
    "QPResult",
    "RiskDecomposition",
    "RiskParams",
    "SelectionResult",
    "SolveReport",
    "SolverOptions",
    "ValidationError",
    "adaptive_penalty",
    "admm",
    "bisection",
    "ccd_separable",
    "ccd_unconstrained",
    "classify",
    "contains",
    "coordinate_prox_update",
    "covariance",
    "decompose",
    "default_start",
    "derive_pins",
    "dykstra",
    "emit_problem",
    "estimate_max_sharpe",
    "format_table",
    "kkt_multipliers",
    "least_squares_rb",
    "load_problem",
    "max_level",
    "naive_two_step",
    "newton_unconstrained",
    "parse_problem",
    "portfolio_vol",
    "project",
    "project_affine",
    "project_box",
    "project_halfspace",
    "project_l1_ball",
    "project_l2_ball",
    "project_qp",
    "project_simplex",
    "prox_l1",
    "prox_l2",
    "prox_linf",
    "prox_log_barrier",
    "prox_max",
    "result_document",
    "risk_measure",
    "save_problem",
    "select_best",
    "sharpe_ratio",
    "solve",
    "solve_qp",
    "__version__",
]
