"""Exact optimal partitioning for the mean and spike models.

Implements the recursion F(t) = min_{0 <= s < t} [F(s) + C(x_{s+1:t}) + beta]
with F(0) = -beta, so only interior changes are penalised.  Optional
inequality pruning drops a candidate s once F(s) + C(x_{s+1:t}) exceeds
F(t); segment costs are superadditive, so such a candidate can never beat
routing through t later.  A small tolerance margin keeps objective ties
alive for the tie-break policy.
"""

from __future__ import annotations

import numpy as np

from ..core import Kind, ModelSpec, PenalizedFit, Segmentation, TimeSeries, fit_params
from .options import PRUNE_INEQUALITY, PRUNE_NONE, SolverOptions

__all__ = ["detect_partition"]


class _MeanCosts:
    """Vectorised segment costs C(x_{s+1:t}) for all s at a given t."""

    def __init__(self, values: np.ndarray, sigma: float):
        self.inv = 1.0 / sigma**2
        self.S1 = np.concatenate(([0.0], np.cumsum(values)))
        self.S2 = np.concatenate(([0.0], np.cumsum(values**2)))

    def advance(self, t: int) -> None:
        pass

    def costs(self, t: int, s: np.ndarray) -> np.ndarray:
        L = t - s
        seg_sum = self.S1[t] - self.S1[s]
        seg_sq = self.S2[t] - self.S2[s]
        return (seg_sq - seg_sum**2 / L) * self.inv


class _SpikeCosts:
    """Running weighted sums R[s] = sum_{i=s+1..t} x_i alpha^(i-s-1).

    Updated incrementally per t to avoid the catastrophic cancellation a
    prefix-sum formulation of alpha^i would cause.
    """

    def __init__(self, values: np.ndarray, alpha: float, sigma: float):
        T = values.size
        self.values = values
        self.inv = 1.0 / sigma**2
        self.S2 = np.concatenate(([0.0], np.cumsum(values**2)))
        self.apow = alpha ** np.arange(T, dtype=float)
        # denom[L] = sum_{k=0}^{L-1} alpha^(2k)
        self.denom = np.concatenate(([np.nan], np.cumsum(self.apow**2)))
        self.R = np.zeros(T + 1)

    def advance(self, t: int) -> None:
        # R[s] += x_t * alpha^(t-1-s) for s = 0..t-1
        self.R[:t] += self.values[t - 1] * self.apow[t - 1::-1]

    def costs(self, t: int, s: np.ndarray) -> np.ndarray:
        seg_sq = self.S2[t] - self.S2[s]
        num = self.R[s]
        return (seg_sq - num**2 / self.denom[t - s]) * self.inv


def detect_partition(
    x, model: ModelSpec, beta: float, opts: SolverOptions | None = None
) -> PenalizedFit:
    """Global minimiser of L(x; tau) + m*beta over all m >= 0 (mean/spike)."""
    if opts is None:
        opts = SolverOptions()
    if model.kind is Kind.SLOPE:
        raise ValueError("use detect_slope for the slope model")
    if not (beta > 0):
        raise ValueError("beta must be > 0")
    series = x if isinstance(x, TimeSeries) else TimeSeries(np.asarray(x, dtype=float))
    values = series.values
    T = values.size
    sigma = model.require_positive_sigma()

    if model.kind is Kind.MEAN:
        costs = _MeanCosts(values, sigma)
        default_prune = PRUNE_INEQUALITY
    else:
        costs = _SpikeCosts(values, model.alpha, sigma)
        default_prune = PRUNE_NONE
    prune = opts.resolve_pruning(default_prune)
    tol = opts.tolerance

    F = np.empty(T + 1)
    F[0] = -beta
    # per-prefix tie-break records: number of changes and changepoint tuple
    mrec: list[int] = [0] * (T + 1)
    taurec: list[tuple[int, ...]] = [()] * (T + 1)
    cand = np.array([0], dtype=np.int64)

    for t in range(1, T + 1):
        costs.advance(t)
        seg = costs.costs(t, cand)
        vals = F[cand] + seg + beta
        best = vals.min()
        ties = np.flatnonzero(vals <= best + tol)
        pick = ties[0]
        if ties.size > 1:
            options = []
            for i in ties:
                s = int(cand[i])
                m_new = mrec[s] + (1 if s > 0 else 0)
                tau_new = taurec[s] + ((s,) if s > 0 else ())
                options.append((m_new, tau_new, i))
            pick = min(options)[2]
        s = int(cand[pick])
        F[t] = vals[pick]
        mrec[t] = mrec[s] + (1 if s > 0 else 0)
        taurec[t] = taurec[s] + ((s,) if s > 0 else ())
        if prune:
            keep = F[cand] + seg <= F[t] + tol
            cand = cand[keep]
        cand = np.append(cand, t)

    if opts.max_changes is not None and mrec[T] > opts.max_changes:
        return _detect_bounded(values, model, beta, opts)

    taus = taurec[T]
    params, raw_cost = fit_params(values, model, taus)
    seg = Segmentation(taus, params, T, model.kind)
    return PenalizedFit(seg, raw_cost, beta, raw_cost + seg.m * beta)


def _detect_bounded(
    values: np.ndarray, model: ModelSpec, beta: float, opts: SolverOptions
) -> PenalizedFit:
    """DP restricted to at most max_changes changes (rarely needed)."""
    T = values.size
    sigma = model.sigma
    if model.kind is Kind.MEAN:
        costs = _MeanCosts(values, sigma)
    else:
        costs = _SpikeCosts(values, model.alpha, sigma)
    # cost matrix C[s, t] for segments x_{s+1..t}
    C = np.full((T + 1, T + 1), np.inf)
    for t in range(1, T + 1):
        costs.advance(t)
        s = np.arange(t)
        C[:t, t] = costs.costs(t, s)
    kmax = min(opts.max_changes, T - 1)
    tol = opts.tolerance
    # G[k][t]: best cost of x_{1..t} with exactly k changes
    G = np.full((kmax + 1, T + 1), np.inf)
    G[0, 1:] = C[0, 1:]
    back = np.zeros((kmax + 1, T + 1), dtype=np.int64)
    for k in range(1, kmax + 1):
        for t in range(k + 1, T + 1):
            s = np.arange(k, t)
            vals = G[k - 1, s] + C[s, t]
            i = int(np.argmin(vals))
            ties = np.flatnonzero(vals <= vals[i] + tol)
            i = int(ties[0])
            G[k, t] = vals[i]
            back[k, t] = s[i]
    best_k, best_obj = 0, G[0, T]
    for k in range(1, kmax + 1):
        obj = G[k, T] + k * beta
        if obj < best_obj - tol:
            best_k, best_obj = k, obj
    taus = []
    t, k = T, best_k
    while k > 0:
        s = int(back[k, t])
        taus.append(s)
        t, k = s, k - 1
    taus = tuple(sorted(taus))
    params, raw_cost = fit_params(values, model, taus)
    seg = Segmentation(taus, params, T, model.kind)
    return PenalizedFit(seg, raw_cost, beta, raw_cost + seg.m * beta)
