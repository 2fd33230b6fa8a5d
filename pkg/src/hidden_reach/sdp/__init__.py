"""Small LMI toolkit: affine matrix expressions, block LMIs, and two solvers."""

from .expr import Affine, Var
from .lmi import BlockLMI, assemble
from .solvers import BACKENDS, MaxDetProblem, SDPResult, normalize_backend, solve_feasibility, solve_maxdet

__all__ = [
    "Affine",
    "Var",
    "BlockLMI",
    "assemble",
    "BACKENDS",
    "MaxDetProblem",
    "SDPResult",
    "normalize_backend",
    "solve_feasibility",
    "solve_maxdet",
]
