"""Exact penalised-cost solvers and their oracles."""

from .brute import brute_force_detect
from .options import PRUNE_INEQUALITY, PRUNE_NONE, TIE_BREAK_POLICY, SolverOptions
from .partition import detect_partition
from .piecewise import Piece, PiecewiseQuadratic, envelope_of
from .slope import SlopeResult, detect_slope

__all__ = [
    "SolverOptions",
    "PRUNE_NONE",
    "PRUNE_INEQUALITY",
    "TIE_BREAK_POLICY",
    "detect_partition",
    "detect_slope",
    "SlopeResult",
    "brute_force_detect",
    "Piece",
    "PiecewiseQuadratic",
    "envelope_of",
]
