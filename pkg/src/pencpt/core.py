"""Domain types and per-model segment costs.

Index convention, used by every module in this package: observations are
x_1, ..., x_T (1-based); storage is a 0-based numpy array with
``values[t - 1] == x_t``.  A changepoint tau is the *last* index of the
segment to its left, so segment j covers x_{tau_{j-1}+1 : tau_j} which is
the python slice ``values[tau_{j-1}:tau_j]``.  Changepoints are interior:
0 < tau_1 < ... < tau_m < T.

Three segment models are supported:

* ``MEAN``  - constant mean per segment, squared-error cost.
* ``SLOPE`` - continuous piecewise-linear mean; segments are parameterised
  by the fitted values at their end knots, which enforces continuity by
  construction.
* ``SPIKE`` - each segment is an exponential decay theta * alpha**(t - s)
  restarting at the segment start.

All costs are standardized: residual sum of squares divided by sigma**2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Kind",
    "ModelSpec",
    "TimeSeries",
    "Segmentation",
    "PenalizedFit",
    "TruthSpec",
    "BoundaryQuadratic",
    "segment_cost_mean",
    "segment_cost_slope",
    "segment_cost_spike",
    "slope_segment_quadratic",
    "spike_theta_hat",
    "true_cost",
    "fit_params",
    "mean_signal",
    "slope_signal",
    "spike_signal",
]


class Kind(enum.Enum):
    MEAN = "mean"
    SLOPE = "slope"
    SPIKE = "spike"


@dataclass(frozen=True)
class ModelSpec:
    """Which segment model, plus the noise scale and (spike only) decay rate.

    ``sigma == 0`` is tolerated so that noiseless data can be generated for
    sanity checks; every cost evaluation and solver requires sigma > 0.
    """

    kind: Kind
    sigma: float
    alpha: float | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.kind is Kind.SPIKE:
            if self.alpha is None or not (0.0 < self.alpha < 1.0):
                raise ValueError("spike model needs alpha strictly inside (0, 1)")
        elif self.alpha is not None:
            raise ValueError(f"alpha only applies to the spike model, not {self.kind}")

    def require_positive_sigma(self) -> float:
        if self.sigma <= 0:
            raise ValueError("cost evaluation needs sigma > 0")
        return self.sigma


@dataclass(frozen=True)
class TimeSeries:
    """Ordered real observations x_1..x_T."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("a series must be one-dimensional with T >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("series contains non-finite entries")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    @property
    def T(self) -> int:
        return self.values.size


def _as_values(x: "TimeSeries | Sequence[float] | np.ndarray") -> np.ndarray:
    if isinstance(x, TimeSeries):
        return x.values
    return TimeSeries(np.asarray(x, dtype=float)).values


def _check_range(T: int, s: int, e: int) -> None:
    if not (1 <= s <= e <= T):
        raise ValueError(f"invalid segment range [{s}, {e}] for T={T}")


def _params_len(kind: Kind, m: int) -> int:
    # mean/spike carry one parameter per segment; slope carries the fitted
    # value at every knot 0 = tau_0 < ... < tau_{m+1} = T.
    return m + 2 if kind is Kind.SLOPE else m + 1


def _validate_changepoints(changepoints: Sequence[int], T: int) -> tuple[int, ...]:
    taus = tuple(int(t) for t in changepoints)
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError(f"changepoints must be strictly increasing: {taus}")
    if taus and not (0 < taus[0] and taus[-1] < T):
        raise ValueError(f"changepoints must be interior to (0, {T}): {taus}")
    return taus


@dataclass(frozen=True)
class Segmentation:
    """A changepoint set with its per-segment parameter block."""

    changepoints: tuple[int, ...]
    params: tuple[float, ...]
    T: int
    kind: Kind

    def __post_init__(self) -> None:
        taus = _validate_changepoints(self.changepoints, self.T)
        object.__setattr__(self, "changepoints", taus)
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        want = _params_len(self.kind, len(taus))
        if len(params) != want:
            raise ValueError(
                f"{self.kind.value} segmentation with m={len(taus)} needs "
                f"{want} parameters, got {len(params)}"
            )

    @property
    def m(self) -> int:
        return len(self.changepoints)


_OBJECTIVE_RTOL = 1e-12


@dataclass(frozen=True)
class PenalizedFit:
    """Result of a penalised-cost minimisation: objective = raw_cost + m*penalty."""

    segmentation: Segmentation
    raw_cost: float
    penalty: float
    objective: float

    def __post_init__(self) -> None:
        if self.raw_cost < 0:
            raise ValueError(f"raw_cost must be >= 0, got {self.raw_cost}")
        expect = self.raw_cost + self.segmentation.m * self.penalty
        scale = max(1.0, abs(expect))
        if abs(self.objective - expect) > _OBJECTIVE_RTOL * scale:
            raise ValueError(
                f"objective {self.objective} != raw_cost + m*penalty = {expect}"
            )

    @property
    def m(self) -> int:
        return self.segmentation.m

    @property
    def changepoints(self) -> tuple[int, ...]:
        return self.segmentation.changepoints


@dataclass(frozen=True)
class TruthSpec:
    """Generating model: true changepoints and true segment parameters.

    ``theta_star`` follows the same shape rules as ``Segmentation.params``.
    The series length T is part of the truth because the slope signal is
    pinned to its final knot at T.
    """

    model: ModelSpec
    T: int
    tau_star: tuple[int, ...]
    theta_star: tuple[float, ...]

    def __post_init__(self) -> None:
        taus = _validate_changepoints(self.tau_star, self.T)
        object.__setattr__(self, "tau_star", taus)
        theta = tuple(float(p) for p in self.theta_star)
        object.__setattr__(self, "theta_star", theta)
        if len(theta) != _params_len(self.model.kind, len(taus)):
            raise ValueError("theta_star has the wrong length for tau_star")
        if any(d < 1 for d in self.segment_lengths):
            raise ValueError("every true segment needs at least one point")
        if any(d <= 0 for d in self.change_sizes):
            raise ValueError("every true change must have a strictly positive size")

    @property
    def m_star(self) -> int:
        return len(self.tau_star)

    @property
    def knots(self) -> tuple[int, ...]:
        return (0,) + self.tau_star + (self.T,)

    @property
    def segment_lengths(self) -> tuple[int, ...]:
        k = self.knots
        return tuple(k[j + 1] - k[j] for j in range(len(k) - 1))

    @property
    def change_sizes(self) -> tuple[float, ...]:
        """Delta_j per model: mean jump, slope difference, or spike jump."""
        kind = self.model.kind
        taus, theta = self.tau_star, self.theta_star
        if kind is Kind.MEAN:
            return tuple(abs(theta[j + 1] - theta[j]) for j in range(len(taus)))
        if kind is Kind.SLOPE:
            k = self.knots
            slopes = [
                (theta[j + 1] - theta[j]) / (k[j + 1] - k[j])
                for j in range(len(k) - 1)
            ]
            return tuple(abs(slopes[j + 1] - slopes[j]) for j in range(len(taus)))
        alpha = self.model.alpha
        lens = self.segment_lengths
        return tuple(
            abs(theta[j + 1] - theta[j] * alpha ** (lens[j] - 1))
            for j in range(len(taus))
        )

    def signal(self) -> np.ndarray:
        kind = self.model.kind
        if kind is Kind.MEAN:
            return mean_signal(self.tau_star, self.theta_star, self.T)
        if kind is Kind.SLOPE:
            return slope_signal(self.tau_star, self.theta_star, self.T)
        return spike_signal(self.tau_star, self.theta_star, self.model.alpha, self.T)


def mean_signal(tau: Sequence[int], theta: Sequence[float], T: int) -> np.ndarray:
    out = np.empty(T)
    knots = (0, *tau, T)
    for j in range(len(knots) - 1):
        out[knots[j]:knots[j + 1]] = theta[j]
    return out


def slope_signal(tau: Sequence[int], theta: Sequence[float], T: int) -> np.ndarray:
    out = np.empty(T)
    knots = (0, *tau, T)
    t = np.arange(1, T + 1, dtype=float)
    for j in range(len(knots) - 1):
        a, b = knots[j], knots[j + 1]
        seg = slice(a, b)
        out[seg] = theta[j] + (theta[j + 1] - theta[j]) * (t[seg] - a) / (b - a)
    return out


def spike_signal(
    tau: Sequence[int], theta: Sequence[float], alpha: float, T: int
) -> np.ndarray:
    out = np.empty(T)
    knots = (0, *tau, T)
    for j in range(len(knots) - 1):
        a, b = knots[j], knots[j + 1]
        out[a:b] = theta[j] * alpha ** np.arange(b - a, dtype=float)
    return out


# ---------------------------------------------------------------------------
# segment costs


def segment_cost_mean(x, s: int, e: int, sigma: float) -> float:
    """min_theta sum_{t=s..e} (x_t - theta)^2 / sigma^2 (theta-hat = segment mean)."""
    v = _as_values(x)
    _check_range(v.size, s, e)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    seg = v[s - 1:e]
    return float(np.sum((seg - seg.mean()) ** 2) / sigma**2)


@dataclass(frozen=True)
class BoundaryQuadratic:
    """Exact segment cost of the slope model as a bivariate quadratic.

    ``a11*u^2 + a12*u*v + a22*v^2 + b1*u + b2*v + c`` where u is the fitted
    value at the left knot and v the fitted value at the right knot.
    """

    a11: float
    a12: float
    a22: float
    b1: float
    b2: float
    c: float

    def evaluate(self, phi_start: float, phi_end: float) -> float:
        u, v = phi_start, phi_end
        return (
            self.a11 * u * u
            + self.a12 * u * v
            + self.a22 * v * v
            + self.b1 * u
            + self.b2 * v
            + self.c
        )


def slope_segment_quadratic(
    x, knot_left: int, knot_right: int, sigma: float
) -> BoundaryQuadratic:
    """Cost of fitting x_{knot_left+1 .. knot_right} with the line through
    (knot_left, phi_start) and (knot_right, phi_end), as a quadratic in the
    two boundary values."""
    v = _as_values(x)
    if not (0 <= knot_left < knot_right <= v.size):
        raise ValueError(f"need 0 <= knot_left < knot_right <= T, got "
                         f"({knot_left}, {knot_right}) with T={v.size}")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    s, e = knot_left, knot_right
    L = e - s
    i = np.arange(s + 1, e + 1, dtype=float)
    seg = v[s:e]
    w_right = (i - s) / L
    w_left = (e - i) / L
    inv = 1.0 / sigma**2
    return BoundaryQuadratic(
        a11=float(np.sum(w_left**2) * inv),
        a12=float(2.0 * np.sum(w_left * w_right) * inv),
        a22=float(np.sum(w_right**2) * inv),
        b1=float(-2.0 * np.sum(seg * w_left) * inv),
        b2=float(-2.0 * np.sum(seg * w_right) * inv),
        c=float(np.sum(seg**2) * inv),
    )


def segment_cost_slope(
    x,
    knot_left: int,
    knot_right: int,
    phi_start: float,
    phi_end: float,
    sigma: float,
) -> float:
    """Slope segment cost evaluated at fixed boundary values."""
    q = slope_segment_quadratic(x, knot_left, knot_right, sigma)
    return q.evaluate(phi_start, phi_end)


def spike_theta_hat(x, s: int, e: int, alpha: float) -> float:
    """Closed-form amplitude: sum x_t alpha^(t-s) / sum alpha^(2(t-s))."""
    v = _as_values(x)
    _check_range(v.size, s, e)
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must be in (0, 1)")
    w = alpha ** np.arange(e - s + 1, dtype=float)
    seg = v[s - 1:e]
    return float(np.dot(seg, w) / np.dot(w, w))


def segment_cost_spike(x, s: int, e: int, alpha: float, sigma: float) -> float:
    """min_theta sum_{t=s..e} (x_t - theta alpha^(t-s))^2 / sigma^2."""
    v = _as_values(x)
    _check_range(v.size, s, e)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    theta = spike_theta_hat(v, s, e, alpha)
    w = alpha ** np.arange(e - s + 1, dtype=float)
    seg = v[s - 1:e]
    return float(np.sum((seg - theta * w) ** 2) / sigma**2)


def true_cost(x, truth: TruthSpec, s: int | None = None, e: int | None = None) -> float:
    """Cost of x_{s..e} against the fixed true signal (no minimisation).

    Additive over any split point: true_cost(s, e) = true_cost(s, r) +
    true_cost(r+1, e).
    """
    v = _as_values(x)
    if s is None:
        s = 1
    if e is None:
        e = truth.T
    if v.size != truth.T:
        raise ValueError(f"series length {v.size} != truth length {truth.T}")
    _check_range(truth.T, s, e)
    sigma = truth.model.require_positive_sigma()
    f = truth.signal()
    res = v[s - 1:e] - f[s - 1:e]
    return float(np.sum(res**2) / sigma**2)


# ---------------------------------------------------------------------------
# exact parameter fits for a fixed changepoint set


def fit_params(
    x, model: ModelSpec, changepoints: Sequence[int]
) -> tuple[tuple[float, ...], float]:
    """Minimise the segment costs over parameters for fixed changepoints.

    Mean/spike use the per-segment closed forms.  Slope solves the normal
    equations of the continuity-constrained least squares over the knot
    values theta_0..theta_{m+1}.
    """
    v = _as_values(x)
    T = v.size
    taus = _validate_changepoints(changepoints, T)
    sigma = model.require_positive_sigma()
    knots = (0, *taus, T)

    if model.kind is Kind.MEAN:
        params, cost = [], 0.0
        for a, b in zip(knots, knots[1:]):
            seg = v[a:b]
            params.append(float(seg.mean()))
            cost += float(np.sum((seg - seg.mean()) ** 2))
        return tuple(params), cost / sigma**2

    if model.kind is Kind.SPIKE:
        params, cost = [], 0.0
        for a, b in zip(knots, knots[1:]):
            theta = spike_theta_hat(v, a + 1, b, model.alpha)
            w = model.alpha ** np.arange(b - a, dtype=float)
            params.append(theta)
            cost += float(np.sum((v[a:b] - theta * w) ** 2))
        return tuple(params), cost / sigma**2

    # Slope: design matrix over knot values.  Row t has weight
    # (knot_right - t)/L on the left knot value and (t - knot_left)/L on the
    # right one.  The system is tridiagonal; it is solved by least squares
    # because the value at knot 0 is unidentified when the first segment has
    # length one (its weight column is all zero there).
    k = len(knots)
    A = np.zeros((T, k))
    t = np.arange(1, T + 1, dtype=float)
    for j in range(k - 1):
        a, b = knots[j], knots[j + 1]
        seg = slice(a, b)
        L = b - a
        A[seg, j] = (b - t[seg]) / L
        A[seg, j + 1] = (t[seg] - a) / L
    theta, *_ = np.linalg.lstsq(A, v, rcond=None)
    res = v - A @ theta
    return tuple(float(p) for p in theta), float(np.sum(res**2) / sigma**2)
