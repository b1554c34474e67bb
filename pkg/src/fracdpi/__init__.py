"""Deep Picard iteration for nonlinear space-time fractional diffusion."""
from .specfun import FracOrders
from .domains import DomainSpec
from .problems import ProblemSpec, make_ball_problem, make_disk_problem, make_double_bump_problem, make_square_problem
from .picard import PicardConfig, PicardRun, run_picard

__version__ = "0.1.0"

__all__ = [
    "FracOrders",
    "DomainSpec",
    "ProblemSpec",
    "make_ball_problem",
    "make_disk_problem",
    "make_double_bump_problem",
    "make_square_problem",
    "PicardConfig",
    "PicardRun",
    "run_picard",
]
