"""Exhaustive oracles for small instances.

These deliberately avoid the DP code paths: mean/spike enumerate every
changepoint subset against a precomputed segment-cost table, and the slope
oracle solves each knot set by least squares on an explicit hinge design.
Enumeration order (m ascending, then lexicographic) doubles as the
tie-break policy: a later candidate replaces the incumbent only when it is
strictly better beyond tolerance.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from ..core import (
    Kind,
    ModelSpec,
    PenalizedFit,
    Segmentation,
    TimeSeries,
    fit_params,
    segment_cost_mean,
    segment_cost_spike,
)

__all__ = ["brute_force_detect"]

_MAX_T = 24


def brute_force_detect(
    x, model: ModelSpec, beta: float, max_m: int | None = None, tol: float = 1e-9
) -> PenalizedFit:
    """Exhaustive minimum of L(x; tau) + m*beta over all subsets with m <= max_m."""
    series = x if isinstance(x, TimeSeries) else TimeSeries(np.asarray(x, dtype=float))
    values = series.values
    T = values.size
    if T > _MAX_T:
        raise ValueError(f"instance too large for enumeration (T={T} > {_MAX_T})")
    if not (beta > 0):
        raise ValueError("beta must be > 0")
    if max_m is None:
        max_m = T - 1
    max_m = min(max_m, T - 1)
    if model.kind is Kind.SLOPE:
        taus, raw = _best_slope(values, model, beta, max_m, tol)
    else:
        taus, raw = _best_partition(values, model, beta, max_m, tol)
    params, raw_cost = fit_params(values, model, taus)
    seg = Segmentation(taus, params, T, model.kind)
    return PenalizedFit(seg, raw_cost, beta, raw_cost + seg.m * beta)


def _best_partition(values, model, beta, max_m, tol):
    T = values.size
    cost = np.zeros((T + 1, T + 1))
    for s in range(1, T + 1):
        for e in range(s, T + 1):
            if model.kind is Kind.MEAN:
                cost[s, e] = segment_cost_mean(values, s, e, model.sigma)
            else:
                cost[s, e] = segment_cost_spike(values, s, e, model.alpha, model.sigma)

    best_taus: tuple[int, ...] = ()
    best_obj = cost[1, T]
    for m in range(1, max_m + 1):
        combos = np.array(list(combinations(range(1, T), m)), dtype=np.int64)
        if combos.size == 0:
            break
        starts = np.hstack([np.ones((combos.shape[0], 1), dtype=np.int64), combos + 1])
        ends = np.hstack([combos, np.full((combos.shape[0], 1), T, dtype=np.int64)])
        objs = cost[starts, ends].sum(axis=1) + m * beta
        i = int(np.argmin(objs))
        ties = np.flatnonzero(objs <= objs[i] + tol)
        i = int(ties[0])
        if objs[i] < best_obj - tol:
            best_obj = float(objs[i])
            best_taus = tuple(int(v) for v in combos[i])
    return best_taus, best_obj


def _best_slope(values, model, beta, max_m, tol):
    T = values.size
    t = np.arange(1, T + 1, dtype=float)
    inv = 1.0 / model.sigma**2

    def knot_cost(taus):
        cols = [np.ones(T), t]
        cols.extend(np.maximum(t - tau, 0.0) for tau in taus)
        A = np.column_stack(cols)
        coef, *_ = np.linalg.lstsq(A, values, rcond=None)
        res = values - A @ coef
        return float(res @ res) * inv

    best_taus: tuple[int, ...] = ()
    best_obj = knot_cost(())
    for m in range(1, max_m + 1):
        for taus in combinations(range(1, T), m):
            obj = knot_cost(taus) + m * beta
            if obj < best_obj - tol:
                best_obj = obj
                best_taus = taus
    return best_taus, best_obj
