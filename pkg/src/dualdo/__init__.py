"""Dynamical low-rank integration of random semilinear heat equations.

A random field ``u(omega)`` on a 1D grid is approximated by ``sum_j U_j Y_j``
with an L2-orthonormal stochastic basis ``Y`` and a linearly independent
deterministic basis ``U``.
"""

from .ambient import (
    Laplacian,
    NonlinearitySpec,
    SampleSpace,
    SpatialGrid,
    eval_f_nonlinear,
    expect,
    inner_h,
    inner_l2omega_h,
    norm_h,
    norm_l2omega_h,
)
from .core import LowRankState, Problem, gram_u, gram_y, project_u, project_y, reconstruct, tangent_project
from .estimators import DualDOSolver, LowRankFactorizer
from .exceptions import ConfigError, DualDOError, NonFinite, NotOrthonormal, RankLoss
from .integrator import StepConfig, Trajectory, integrate, step
from .problems import PROBLEMS, make_problem
from .rank_monitor import RankEvent, RankMonitor, Thresholds, drop_rank_restart, integrate_rank_adaptive
from .reference import best_rank_error, error_l2, solve_full
from .reparam import SvdFactors, initial_factorize, svd_low_rank, theta_ode_solve

__version__ = "0.1.0"

__all__ = [
    "Laplacian",
    "NonlinearitySpec",
    "SampleSpace",
    "SpatialGrid",
    "eval_f_nonlinear",
    "expect",
    "inner_h",
    "inner_l2omega_h",
    "norm_h",
    "norm_l2omega_h",
    "LowRankState",
    "Problem",
    "gram_u",
    "gram_y",
    "project_u",
    "project_y",
    "reconstruct",
    "tangent_project",
    "DualDOSolver",
    "LowRankFactorizer",
    "ConfigError",
    "DualDOError",
    "NonFinite",
    "NotOrthonormal",
    "RankLoss",
    "StepConfig",
    "Trajectory",
    "integrate",
    "step",
    "PROBLEMS",
    "make_problem",
    "RankEvent",
    "RankMonitor",
    "Thresholds",
    "drop_rank_restart",
    "integrate_rank_adaptive",
    "best_rank_error",
    "error_l2",
    "solve_full",
    "SvdFactors",
    "initial_factorize",
    "svd_low_rank",
    "theta_ode_solve",
]
