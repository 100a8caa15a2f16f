"""Piecewise Toeplitz sensing operators and low-rank recovery experiments."""
from .errors import DegenerateInputError, ParameterError
from .kernels import BACKEND
from .matrix_model import decompose, gen_low_rank_slrp
from .operators import gen_dense, gen_operator, gen_piecewise_toeplitz, materialize
from .solvers import SolverConfig, als_solve, svt_solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DegenerateInputError", "ParameterError", "SolverConfig", "als_solve",
    "decompose", "gen_dense", "gen_low_rank_slrp", "gen_operator", "gen_piecewise_toeplitz",
    "materialize", "svt_solve",
]
