"""Exact continuity-constrained slope solver (functional DP over phi)."""

from __future__ import annotations

import numpy as np

from ..core import Kind, PenalizedFit, Segmentation, TimeSeries
from . import _kernel
from .options import PRUNE_INEQUALITY, SolverOptions
from .piecewise import Piece, PiecewiseQuadratic

__all__ = ["detect_slope", "SlopeResult"]

_STATUS_MSG = {
    _kernel.ERR_POOL: "value-function pool overflow",
    _kernel.ERR_CAND: "candidate buffer overflow",
    _kernel.ERR_ENV: "envelope buffer overflow",
}


class SlopeResult(PenalizedFit):
    """PenalizedFit plus the stored value functions when requested."""

    def __init__(self, fit: PenalizedFit, value_functions):
        object.__setattr__(self, "segmentation", fit.segmentation)
        object.__setattr__(self, "raw_cost", fit.raw_cost)
        object.__setattr__(self, "penalty", fit.penalty)
        object.__setattr__(self, "objective", fit.objective)
        object.__setattr__(self, "value_functions", value_functions)


def _prefix_arrays(values: np.ndarray):
    T = values.size
    t = np.arange(1, T + 1, dtype=float)
    P1 = np.concatenate(([0.0], np.cumsum(values)))
    Pt = np.concatenate(([0.0], np.cumsum(t * values)))
    Pq = np.concatenate(([0.0], np.cumsum(values**2)))
    Si = np.concatenate(([0.0], np.cumsum(t)))
    Sii = np.concatenate(([0.0], np.cumsum(t**2)))
    return P1, Pt, Pq, Si, Sii


def detect_slope(
    x, sigma: float, beta: float, opts: SolverOptions | None = None
) -> PenalizedFit:
    """Exact minimiser of the continuity-constrained penalised cost.

    Maintains f_t(phi), the minimal cost of x_{1:t} whose fitted signal has
    a knot of height phi at t, as a lower envelope of convex quadratics;
    the answer is min_phi f_T(phi) with knot positions and heights read
    back through stored argmin pointers.
    """
    if opts is None:
        opts = SolverOptions()
    if opts.max_changes is not None:
        raise ValueError("max_changes is not supported by the slope solver")
    series = x if isinstance(x, TimeSeries) else TimeSeries(np.asarray(x, dtype=float))
    values = series.values
    T = values.size
    if T < 2:
        raise ValueError("the slope model needs T >= 2 (a line has two knots)")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if not (beta > 0):
        raise ValueError("beta must be > 0")

    P1, Pt, Pq, Si, Sii = _prefix_arrays(values)
    pool_cap = 128 * T + 4096
    pool_a = np.empty(pool_cap)
    pool_b = np.empty(pool_cap)
    pool_c = np.empty(pool_cap)
    pool_lo = np.empty(pool_cap)
    pool_src_s = np.empty(pool_cap, dtype=np.int64)
    pool_src_piece = np.empty(pool_cap, dtype=np.int64)
    pool_m = np.empty(pool_cap, dtype=np.int64)
    ft_start = np.zeros(T + 1, dtype=np.int64)
    ft_count = np.zeros(T + 1, dtype=np.int64)

    use_pruning = 1 if opts.resolve_pruning(PRUNE_INEQUALITY) else 0
    prune_margin = 1e-7 * max(1.0, beta)
    status, pool_n = _kernel._slope_dp(
        P1, Pt, Pq, Si, Sii, T, float(sigma), float(beta),
        use_pruning, prune_margin,
        pool_a, pool_b, pool_c, pool_lo, pool_src_s, pool_src_piece, pool_m,
        ft_start, ft_count,
    )
    if status != _kernel.OK:
        raise RuntimeError(f"slope DP failed: {_STATUS_MSG[status]}")

    knots, heights, best_obj = _backtrack(
        values, sigma, beta, opts.tolerance,
        pool_a, pool_b, pool_c, pool_lo, pool_src_s, pool_src_piece, pool_m,
        ft_start, ft_count, T, P1, Pt, Pq, Si, Sii,
    )
    taus = tuple(knots[1:-1])
    raw_cost = _residual_cost(values, knots, heights, sigma)
    m = len(taus)
    # guard against any kernel-level inconsistency
    if abs(best_obj - (raw_cost + m * beta)) > 1e-6 * max(1.0, abs(best_obj)):
        raise RuntimeError(
            f"slope DP internal mismatch: dp={best_obj}, refit={raw_cost + m * beta}"
        )
    seg = Segmentation(taus, tuple(heights), T, Kind.SLOPE)
    fit = PenalizedFit(seg, raw_cost, beta, raw_cost + m * beta)
    if not opts.keep_value_functions:
        return fit
    vfs = []
    for t in range(1, T + 1):
        pieces = []
        a0 = int(ft_start[t])
        n = int(ft_count[t])
        for k in range(a0, a0 + n):
            lo = pool_lo[k]
            hi = pool_lo[k + 1] if k + 1 < a0 + n else np.inf
            pieces.append(Piece(lo, hi, pool_a[k], pool_b[k], pool_c[k]))
        vfs.append(PiecewiseQuadratic(tuple(pieces)))
    return SlopeResult(fit, tuple(vfs))


def _piece_argmin(a, b, c, lo, hi):
    if a > 0:
        phi = -b / (2.0 * a)
        phi = min(max(phi, lo), hi)
    else:
        phi = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
    return (a * phi + b) * phi + c, phi


def _backtrack(
    values, sigma, beta, tol,
    pool_a, pool_b, pool_c, pool_lo, pool_src_s, pool_src_piece, pool_m,
    ft_start, ft_count, T, P1, Pt, Pq, Si, Sii,
):
    a0 = int(ft_start[T])
    n = int(ft_count[T])
    cands = []
    best_v = np.inf
    for k in range(a0, a0 + n):
        lo = pool_lo[k]
        hi = pool_lo[k + 1] if k + 1 < a0 + n else np.inf
        v, phi = _piece_argmin(pool_a[k], pool_b[k], pool_c[k], lo, hi)
        cands.append((v, int(pool_m[k]), k, phi))
        best_v = min(best_v, v)
    near = [c for c in cands if c[0] <= best_v + tol * max(1.0, abs(best_v))]
    # ties: fewest changes first, then the lexicographically smallest taus
    near.sort(key=lambda c: c[1])
    walked = [(_walk(c[2], c[3], T, pool_a, pool_b, pool_c, pool_src_s,
                     pool_src_piece, P1, Pt, Pq, Si, Sii, sigma), c) for c in near
              if c[1] == near[0][1]]
    walked.sort(key=lambda wc: wc[0][0])
    (knots, heights), chosen = walked[0]
    if len(knots) - 2 != chosen[1]:
        raise RuntimeError("slope DP backtrack lost count of the knots")
    return knots, heights, chosen[0]


def _walk(piece, phi, T, pool_a, pool_b, pool_c, pool_src_s, pool_src_piece,
          P1, Pt, Pq, Si, Sii, sigma):
    inv = 1.0 / sigma**2
    knots = [T]
    heights = [phi]
    t = T
    p = piece
    while True:
        s = int(pool_src_s[p])
        sp = int(pool_src_piece[p])
        if s < 0:
            break
        A, B, C, D, E, F = _kernel._segment_coeffs(P1, Pt, Pq, Si, Sii, s, t, inv)
        if sp >= 0:
            a_src, b_src = pool_a[sp], pool_b[sp]
        else:
            a_src, b_src = 0.0, 0.0
        p2 = a_src + A
        if p2 > 0:
            phi = -(b_src + D + B * phi) / (2.0 * p2)
        # else: the left height is unidentified (length-one first segment);
        # keep it flat at the current value
        knots.append(s)
        heights.append(phi)
        if s == 0:
            break
        t = s
        p = sp
    knots.reverse()
    heights.reverse()
    return tuple(knots), tuple(heights)


def _residual_cost(values, knots, heights, sigma):
    T = values.size
    t = np.arange(1, T + 1, dtype=float)
    f = np.empty(T)
    for j in range(len(knots) - 1):
        a, b = knots[j], knots[j + 1]
        seg = slice(a, b)
        f[seg] = heights[j] + (heights[j + 1] - heights[j]) * (t[seg] - a) / (b - a)
    return float(np.sum((values - f) ** 2) / sigma**2)
