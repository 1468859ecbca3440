"""Piecewise-quadratic functions of the boundary value phi.

These arise as value functions of the slope DP: pointwise minima of convex
quadratics.  Pieces tile (-inf, +inf); each piece is a globally defined
quadratic that attains the minimum on its interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernel

__all__ = ["Piece", "PiecewiseQuadratic"]

_CONTINUITY_ATOL = 1e-7


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    a: float
    b: float
    c: float

    def evaluate(self, phi: float) -> float:
        return (self.a * phi + self.b) * phi + self.c


@dataclass(frozen=True)
class PiecewiseQuadratic:
    pieces: tuple[Piece, ...]

    def __post_init__(self) -> None:
        ps = self.pieces
        if not ps:
            raise ValueError("a piecewise quadratic needs at least one piece")
        if ps[0].lo != -np.inf or ps[-1].hi != np.inf:
            raise ValueError("pieces must cover (-inf, +inf)")
        for left, right in zip(ps, ps[1:]):
            if left.hi != right.lo:
                raise ValueError("pieces must be contiguous and sorted")
        for p in ps:
            if p.lo >= p.hi:
                raise ValueError("pieces must have positive width")
            if p.a < 0:
                raise ValueError("pieces must be convex (a >= 0)")
        for left, right in zip(ps, ps[1:]):
            at = left.hi
            gap = abs(left.evaluate(at) - right.evaluate(at))
            if gap > _CONTINUITY_ATOL * max(1.0, abs(left.evaluate(at))):
                raise ValueError(f"discontinuity {gap} at phi={at}")

    @classmethod
    def from_quadratics(
        cls, coeffs: Iterable[tuple[float, float, float]]
    ) -> "PiecewiseQuadratic":
        """Lower envelope of globally defined convex quadratics."""
        rows = [(float(a), float(b), float(c)) for a, b, c in coeffs]
        if not rows:
            raise ValueError("need at least one quadratic")
        if any(a < 0 for a, _, _ in rows):
            raise ValueError("envelope inputs must be convex (a >= 0)")
        ca = np.array([r[0] for r in rows])
        cb = np.array([r[1] for r in rows])
        cc = np.array([r[2] for r in rows])
        cap = max(64, 8 * len(rows))
        lo_buf = np.empty(cap)
        qi_buf = np.empty(cap, dtype=np.int64)
        tmp_lo = np.empty(cap)
        tmp_qi = np.empty(cap, dtype=np.int64)
        n = _kernel._build_envelope(ca, cb, cc, lo_buf, qi_buf, tmp_lo, tmp_qi)
        if n < 0:
            raise RuntimeError("envelope buffer overflow")
        pieces = []
        for k in range(n):
            lo = lo_buf[k]
            hi = lo_buf[k + 1] if k + 1 < n else np.inf
            q = int(qi_buf[k])
            pieces.append(Piece(lo, hi, *rows[q]))
        return cls(tuple(pieces))

    def evaluate(self, phi) -> np.ndarray | float:
        phis = np.atleast_1d(np.asarray(phi, dtype=float))
        los = np.array([p.lo for p in self.pieces])
        idx = np.clip(np.searchsorted(los, phis, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.empty_like(phis)
        for k, p in enumerate(self.pieces):
            sel = idx == k
            if np.any(sel):
                out[sel] = (p.a * phis[sel] + p.b) * phis[sel] + p.c
        return out if np.ndim(phi) else float(out[0])

    def minimum(self) -> tuple[float, float]:
        """(min value, argmin phi) over the whole real line."""
        best_v, best_phi = np.inf, 0.0
        for p in self.pieces:
            v, phi = _piece_min(p)
            if v < best_v:
                best_v, best_phi = v, phi
        return best_v, best_phi


def _piece_min(p: Piece) -> tuple[float, float]:
    if p.a > 0:
        phi = -p.b / (2.0 * p.a)
        phi = min(max(phi, p.lo), p.hi)
        return p.evaluate(phi), phi
    if p.b == 0:
        phi = p.lo if np.isfinite(p.lo) else min(p.hi, 0.0)
        if not np.isfinite(phi):
            phi = 0.0
        return p.c, phi
    # linear piece: minimum at a finite endpoint (value functions are
    # bounded below, so an unbounded linear piece cannot occur)
    cand = [e for e in (p.lo, p.hi) if np.isfinite(e)]
    vals = [(p.evaluate(e), e) for e in cand]
    return min(vals)


def envelope_of(pq_list: Sequence[PiecewiseQuadratic]) -> PiecewiseQuadratic:
    """Pointwise minimum of several piecewise quadratics."""
    quads = []
    for pq in pq_list:
        quads.extend((p.a, p.b, p.c) for p in pq.pieces)
    return PiecewiseQuadratic.from_quadratics(quads)
