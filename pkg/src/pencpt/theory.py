"""Evaluable detectability theory: penalty thresholds, gap and failure-rate
functions, signal strengths, localization radii, chi-square tail bounds,
non-centralities and the global consistency bound.

Logarithms are natural throughout.  Out-of-domain inputs yield flagged
trivial bounds rather than fabricated numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import Kind, ModelSpec, PenalizedFit, TruthSpec

__all__ = [
    "TheoryParams",
    "LocalizationPlan",
    "GlobalBound",
    "Flagged",
    "VacuousRadiusError",
    "default_penalty",
    "gamma_thresholds",
    "gap_functions",
    "failure_probs",
    "signal_strength",
    "p5",
    "localization_radius",
    "global_bound",
    "event_holds",
    "chisq_tail_bounds",
    "noncentrality",
    "noncentrality_mean",
    "noncentrality_slope",
    "noncentrality_slope_from_delta",
    "noncentrality_spike",
    "noncentrality_spike_jump_form",
    "mad_sigma",
    "penalty_threshold_log_T",
]


class Flagged(NamedTuple):
    """A bound together with whether its preconditions held."""

    value: float
    valid: bool


class VacuousRadiusError(ValueError):
    """The spike localization-radius formula has no finite constraint.

    Raised when 1 - Delta^2 / (4 (1-alpha^2) (beta+a)) <= 0: the change is
    large enough that the signal-strength threshold is met at every window
    length, so only the neighbouring segment lengths constrain n_j.
    """

    def __init__(self, delta: float, fallback: int):
        self.fallback = fallback
        super().__init__(
            f"radius formula vacuous for Delta={delta}; "
            f"segment lengths alone give n_j={fallback}"
        )


@dataclass(frozen=True)
class TheoryParams:
    """Inputs shared by the threshold formulas.

    ``slope_constant_C`` is the unspecified positive constant of the slope
    thresholds; theory-side only, default 1.0.
    """

    epsilon: float
    T: int
    m_star: int
    model: ModelSpec
    slope_constant_C: float = 1.0

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if self.m_star < 0:
            raise ValueError("m_star must be >= 0")
        if self.slope_constant_C <= 0:
            raise ValueError("slope_constant_C must be > 0")


def default_penalty(T: int, epsilon: float) -> float:
    """(2 + epsilon) * ln T."""
    if T < 2:
        raise ValueError("T must be >= 2")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    return (2.0 + epsilon) * math.log(T)


# --- threshold formulas, written over log n so that huge T can be probed ---


def _gamma1_log(kind: Kind, ln: float, eps: float, m: int) -> float:
    if kind is Kind.SLOPE:
        return max(
            (2.0 + eps) * ln,
            2.0 * ln + 4.0 * math.sqrt(9.0 + 3.0 * ln) + 12.0,
            2.0 * ln + 96.0 * (2 * m + 1),
        )
    return max(
        (2.0 + eps) * ln,
        2.0 * ln + 8.0 * math.sqrt(16.0 + 2.0 * ln) + 32.0,
        2.0 * ln + 32.0 * (2 * m + 1),
    )


def _gamma2_log(kind: Kind, l2n: float, eps: float, m: int, C: float) -> float:
    if kind is Kind.SLOPE:
        return max(
            (3.0 + eps) * l2n,
            2.0 * l2n + 32.0 * math.log(C * l2n),
            2.0 * l2n + 972.0 * (2 * m + 1),
            3240.0,
        )
    return max(
        (8 * m + 6 + eps) * l2n,
        2.0 * l2n + 64.0 * (2 * m + 1),
    )


def gamma_thresholds(params: TheoryParams, n: int) -> tuple[float, float]:
    """Penalty thresholds (gamma_n^(1), gamma_n^(2)) for window length n."""
    if n < 2:
        raise ValueError("n must be >= 2")
    kind = params.model.kind
    g1 = _gamma1_log(kind, math.log(n), params.epsilon, params.m_star)
    g2 = _gamma2_log(
        kind, math.log(2 * n), params.epsilon, params.m_star, params.slope_constant_C
    )
    return g1, g2


def gap_functions(params: TheoryParams, gamma: float, n: int) -> tuple[float, float]:
    """The cost-gap functions a(gamma, n) and b(gamma, n).

    a = (gamma - 2 ln n) / d and b = a / (2 m* + 1) with d = 4 for mean and
    spike, 6 for slope, so a > 2 m* b holds identically.
    """
    ln = math.log(n)
    if gamma <= 2.0 * ln:
        raise ValueError(f"need gamma > 2 ln n = {2.0 * ln}")
    d = 6.0 if params.model.kind is Kind.SLOPE else 4.0
    a = (gamma - 2.0 * ln) / d
    b = a / (2 * params.m_star + 1)
    assert a > 2 * params.m_star * b
    return a, b


def _clip1(v: float) -> float:
    return min(1.0, v)


def failure_probs(
    params: TheoryParams, gamma: float, n: int
) -> tuple[float, float, float, float]:
    """(p1, p2, p3, p4) at penalty gamma.

    p1/p2 treat n as a no-change window length; p3/p4 treat n as the
    half-width of a one-change window (their displays use log 2n).  Each
    is clipped at the trivial bound 1.
    """
    m = params.m_star
    ln = math.log(n)
    l2n = math.log(2 * n)
    if params.model.kind is Kind.SLOPE:
        p1 = 2.0 * math.exp(-(gamma - 2.0 * ln) / 6.0)
        p2 = math.exp(-(gamma - 2.0 * ln) / (24.0 * (2 * m + 1)))
        p3 = 2.25 * math.exp(-(gamma - 3.0 * l2n) / 3.0)
        p4 = math.exp(-(gamma - 2.0 * l2n) / (24.0 * (2 * m + 1)))
    else:
        p1 = 2.0 * math.exp(-(gamma - 2.0 * ln) / 4.0)
        p2 = math.exp(-(gamma - 2.0 * ln) / (16.0 * (2 * m + 1)))
        p3 = math.exp(-(gamma - 8.0 * l2n) / 4.0)
        p4 = math.exp(-(gamma - (8 * m + 6) * l2n) / (16.0 * (2 * m + 1)))
    return _clip1(p1), _clip1(p2), _clip1(p3), _clip1(p4)


def signal_strength(model: ModelSpec, delta: float, n: int) -> float:
    """S(Delta, n): detectability of a change of size Delta with n points
    on each side.

    Mean: n Delta^2 / 2.  Slope: n^3 Delta^2 / 25.  Spike:
    Delta^2 / ((1 - alpha^(2n)) (1 - alpha^2)) - note this one decreases in
    n, because a longer window dilutes a fixed jump of the decay curve.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    if model.kind is Kind.MEAN:
        return n * delta**2 / 2.0
    if model.kind is Kind.SLOPE:
        return n**3 * delta**2 / 25.0
    a = model.alpha
    return delta**2 / ((1.0 - a ** (2 * n)) * (1.0 - a**2))


def p5(kind: Kind, s: float, z: float) -> Flagged:
    """2 exp(-z/20), valid for S/4 >= z >= 5 (mean/spike) or 8 (slope)."""
    floor = 8.0 if kind is Kind.SLOPE else 5.0
    if z < floor or s / 4.0 < z:
        return Flagged(1.0, False)
    return Flagged(_clip1(2.0 * math.exp(-z / 20.0)), True)


_CEIL_SLACK = 1e-9


def localization_radius(
    model: ModelSpec,
    beta: float,
    a_beta_T: float,
    delta_j: float,
    seg_lens: tuple[int, int],
) -> int:
    """n_j = min(model radius formula, delta_j, delta_{j+1}), ceiled to >= 1.

    Mean: 8 (beta+a) / Delta^2.  Slope: (100 (beta+a) / Delta^2)^(1/3).
    Spike: (1/2) log_alpha(1 - Delta^2 / (4 (1-alpha^2) (beta+a))); a
    non-positive log argument raises VacuousRadiusError instead of being
    clipped silently.
    """
    if delta_j <= 0:
        raise ValueError("delta_j must be > 0")
    budget = beta + a_beta_T
    if budget <= 0:
        raise ValueError("beta + a(beta, T) must be > 0")
    dl, dr = seg_lens
    cap = min(int(dl), int(dr))
    if model.kind is Kind.MEAN:
        raw = 8.0 * budget / delta_j**2
    elif model.kind is Kind.SLOPE:
        raw = (100.0 * budget / delta_j**2) ** (1.0 / 3.0)
    else:
        alpha = model.alpha
        arg = 1.0 - delta_j**2 / (4.0 * (1.0 - alpha**2) * budget)
        if arg <= 0.0:
            raise VacuousRadiusError(delta_j, max(1, cap))
        raw = 0.5 * math.log(arg) / math.log(alpha)
    term = math.ceil(raw - _CEIL_SLACK)
    return max(1, min(term, cap))


@dataclass(frozen=True)
class LocalizationPlan:
    """Window half-widths n_1..n_m* and the induced minimum signal strength."""

    n: tuple[int, ...]
    s_bar: float
    clipped_changes: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if any(v < 1 for v in self.n):
            raise ValueError("every n_j must be >= 1")

    @classmethod
    def from_truth(
        cls,
        truth: TruthSpec,
        beta: float,
        a_beta_T: float,
        on_vacuous: str = "raise",
    ) -> "LocalizationPlan":
        """Radii from the per-model formulas, capped by segment lengths.

        ``on_vacuous='clip'`` records (instead of raising on) spike changes
        whose radius constraint is vacuous, using the segment-length cap.
        """
        lens = truth.segment_lengths
        radii: list[int] = []
        clipped: list[int] = []
        for j, delta in enumerate(truth.change_sizes):
            pair = (lens[j], lens[j + 1])
            try:
                nj = localization_radius(truth.model, beta, a_beta_T, delta, pair)
            except VacuousRadiusError as err:
                if on_vacuous != "clip":
                    raise
                nj = err.fallback
                clipped.append(j)
            if nj > min(pair):
                nj = min(pair)
            radii.append(nj)
        return cls.for_truth(truth, tuple(radii), tuple(clipped))

    @classmethod
    def for_truth(
        cls,
        truth: TruthSpec,
        n: tuple[int, ...],
        clipped: tuple[int, ...] = (),
    ) -> "LocalizationPlan":
        lens = truth.segment_lengths
        if len(n) != truth.m_star:
            raise ValueError("plan length must equal m_star")
        for j, nj in enumerate(n):
            if not (0 < nj <= min(lens[j], lens[j + 1])):
                raise ValueError(
                    f"n_{j + 1}={nj} outside (0, min(delta_j, delta_j+1)]"
                )
        if truth.m_star == 0:
            return cls((), math.inf, clipped)
        s_bar = min(
            signal_strength(truth.model, d, nj)
            for d, nj in zip(truth.change_sizes, n)
        )
        return cls(tuple(int(v) for v in n), s_bar, clipped)


@dataclass(frozen=True)
class GlobalBound:
    """Eq.-style lower bound on the joint localisation event probability.

    ``value`` may be negative; that is reported, not clipped - a vacuous
    bound is information.
    """

    value: float
    vacuous: bool
    penalty_clears_thresholds: bool
    terms: dict = field(default_factory=dict)


def global_bound(
    params: TheoryParams,
    beta: float,
    plan: LocalizationPlan,
    max_segment_length: int | None = None,
) -> GlobalBound:
    """1 - (m*+1)(p1+p2) - m*(p3+p4) - m* p5(S-bar, beta + a(beta,T)).

    The threshold check uses gamma^(1) at T, or at ``max_segment_length``
    when given (the smaller-penalty variant for known maximum segment
    size; experimental, semantics exactly as that remark states).
    """
    m = params.m_star
    if len(plan.n) != m:
        raise ValueError("plan does not match m_star")
    a, _b = gap_functions(params, beta, params.T)
    p1, p2, _, _ = failure_probs(params, beta, params.T)
    n1_ref = params.T if max_segment_length is None else max_segment_length
    g1, _ = gamma_thresholds(params, n1_ref)
    terms = {"a": a, "p1": p1, "p2": p2}
    if m == 0:
        value = 1.0 - p1 - p2
        ok = beta >= g1
        return GlobalBound(value, value <= 0.0, ok, terms)
    n_max = max(plan.n)
    _, _, p3, p4 = failure_probs(params, beta, max(2, n_max))
    p5v = p5(params.model.kind, plan.s_bar, beta + a)
    _, g2 = gamma_thresholds(params, max(2, n_max))
    ok = beta >= max(g1, g2)
    value = 1.0 - (m + 1) * (p1 + p2) - m * (p3 + p4) - m * p5v.value
    terms.update({"p3": p3, "p4": p4, "p5": p5v.value, "p5_valid": p5v.valid})
    return GlobalBound(value, value <= 0.0, ok, terms)


def event_holds(truth: TruthSpec, fit: PenalizedFit, plan: LocalizationPlan) -> bool:
    """m-hat == m* and |tau-hat_j - tau*_j| <= n_j for all j (inclusive)."""
    if len(plan.n) != truth.m_star:
        raise ValueError("plan does not match the truth")
    if fit.m != truth.m_star:
        return False
    return all(
        abs(th - ts) <= nj
        for th, ts, nj in zip(fit.changepoints, truth.tau_star, plan.n)
    )


def chisq_tail_bounds(
    k: int, x: float | None = None, nu: float = 0.0, y: float | None = None
) -> tuple[Flagged, Flagged]:
    """Concentration bounds for chi-square variables.

    upper: P(chi2_k >= x) <= exp(-(x - sqrt(k(2x-k)))/2), needs x > k.
    lower: P(chi2_k(nu) <= y) <= exp(-(k+nu-y)^2 / (4k+8nu)), needs y < k+nu.
    Violated preconditions give the trivial flagged bound 1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if nu < 0:
        raise ValueError("nu must be >= 0")
    if x is not None and x > k:
        upper = Flagged(math.exp(-(x - math.sqrt(k * (2.0 * x - k))) / 2.0), True)
    else:
        upper = Flagged(1.0, False)
    if y is not None and y < k + nu:
        lower = Flagged(math.exp(-((k + nu - y) ** 2) / (4.0 * k + 8.0 * nu)), True)
    else:
        lower = Flagged(1.0, False)
    return upper, lower


# --- non-centralities of L(S; empty) - L(S; tau*) on a 2n window ------------


def noncentrality_mean(delta: float, n: int) -> float:
    """nu = n Delta^2 / 2."""
    return n * delta**2 / 2.0


_SLOPE_NU_RTOL = 1e-10


def noncentrality_slope(theta0: float, theta1: float, theta2: float, n: int) -> float:
    """nu for a slope change on a 2n window with knot heights (theta0,
    theta1, theta2) at positions (0, n, 2n).

    Both closed forms are evaluated and cross-checked: the projection form
    in the curvature theta2 - 2 theta1 + theta0, and the slope-difference
    form in Delta = (theta2 - 2 theta1 + theta0)/n.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    curv = theta2 - 2.0 * theta1 + theta0
    form1 = (
        curv**2
        / n**2
        * (n * (n + 1) * (n - 1) * (2 * n**2 + 1))
        / (12.0 * (2 * n - 1) * (2 * n + 1))
    )
    form2 = noncentrality_slope_from_delta(curv / n, n)
    if abs(form1 - form2) > _SLOPE_NU_RTOL * max(1.0, abs(form1)):
        raise AssertionError(f"slope nu forms disagree: {form1} vs {form2}")
    return form1


def noncentrality_slope_from_delta(delta: float, n: int) -> float:
    """Slope nu from the slope difference Delta:
    Delta^2 n(n+1)(n-1)/24 * (4n^2+2)/(4n^2-1) (which is >= Delta^2 n^3/25)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return delta**2 * (n * (n + 1) * (n - 1)) / 24.0 * (4 * n**2 + 2) / (4 * n**2 - 1)


def noncentrality_spike(theta1: float, theta2: float, alpha: float, n: int) -> float:
    """Exact spike nu on a 2n window with amplitudes theta1, theta2.

    nu = G (theta2 - eta theta1)^2 / (1 + eta^2) with eta = alpha^n and
    G = (1 - alpha^(2n)) / (1 - alpha^2): the squared projection of the
    true signal on the direction that separates a split fit from a joint
    one.  It vanishes exactly when theta2 = theta1 alpha^n (a zero-effect
    change) and tends to the mean-model n Delta^2 / 2 as alpha -> 1.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must be in (0, 1)")
    eta = alpha**n
    G = (1.0 - alpha ** (2 * n)) / (1.0 - alpha**2)
    return G * (theta2 - eta * theta1) ** 2 / (1.0 + eta**2)


def noncentrality_spike_jump_form(delta: float, alpha: float, n: int) -> float:
    """The displayed jump-size simplification
    Delta^2 (1 + alpha^(2n)) / ((1 - alpha^(2n)) (1 - alpha^2)).

    This diverges as alpha -> 1 at fixed Delta and differs from the exact
    projection value of ``noncentrality_spike`` except in degenerate cases;
    it is kept because it is the form the detectability displays use.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must be in (0, 1)")
    a2n = alpha ** (2 * n)
    return delta**2 * (1.0 + a2n) / ((1.0 - a2n) * (1.0 - alpha**2))


def noncentrality(model: ModelSpec, change: Sequence[float], n: int) -> float:
    """Dispatch on the model kind.

    ``change``: (theta1, theta2) for mean and spike; knot heights
    (theta0, theta1, theta2) for slope.
    """
    if model.kind is Kind.MEAN:
        t1, t2 = change
        return noncentrality_mean(abs(t2 - t1), n)
    if model.kind is Kind.SLOPE:
        t0, t1, t2 = change
        return noncentrality_slope(t0, t1, t2, n)
    t1, t2 = change
    return noncentrality_spike(t1, t2, model.alpha, n)


# --- noise scale ------------------------------------------------------------

_MAD_NORMAL = 0.6745


def mad_sigma(x, difference_order: int = 1) -> float:
    """Median-absolute-deviation noise scale from differenced data.

    sigma-hat = median(|d_t|) / (0.6745 sqrt(c)) with d the order-1 or
    order-2 differences and c = 2 or 6 (the variance inflation of
    differencing i.i.d. noise).  Order 1 suits mean/spike, order 2 slope.
    A zero estimate (constant series) is returned as-is; callers must
    treat it as degenerate and supply sigma themselves.
    """
    from .core import TimeSeries

    series = x if isinstance(x, TimeSeries) else TimeSeries(np.asarray(x, dtype=float))
    if difference_order not in (1, 2):
        raise ValueError("difference_order must be 1 or 2")
    if series.T < difference_order + 1:
        raise ValueError("series too short to difference")
    d = np.diff(series.values, n=difference_order)
    c = 2.0 if difference_order == 1 else 6.0
    return float(np.median(np.abs(d)) / (_MAD_NORMAL * math.sqrt(c)))


def penalty_threshold_log_T(
    kind: Kind, epsilon: float, m_star: int, hi: float = 1e8
) -> float:
    """Smallest ln T at which (2+eps) ln T clears gamma_T^(1).

    The crossing scale grows like exp(const/eps^2), far beyond any
    representable T for small eps, so the search runs in the log domain
    and the result is reported as ln T0.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")

    def gap(ln: float) -> float:
        return (2.0 + epsilon) * ln - _gamma1_log(kind, ln, epsilon, m_star)

    lo = math.log(2.0)
    if gap(hi) < 0:
        raise ValueError("no crossing below the search bound")
    if gap(lo) >= 0:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi
