"""Small LMI modeling layer lowered to conic programs."""

from .expr import Affine, MatrixVar, as_affine, block_diag, bmat, hstack, vstack, zeros
from .problem import DEFAULT_MARGIN, Constraint, ConicProgram, LmiProblem, SolveReport, evaluate
from .backends import BACKENDS, solve

__all__ = [
    "Affine", "MatrixVar", "as_affine", "block_diag", "bmat", "hstack",
    "vstack", "zeros", "DEFAULT_MARGIN", "Constraint", "ConicProgram",
    "LmiProblem", "SolveReport", "evaluate", "BACKENDS", "solve",
]
