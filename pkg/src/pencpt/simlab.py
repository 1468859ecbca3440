"""Synthetic data generation and Monte Carlo verification of the
consistency events.

Randomness comes from numpy's counter-based Philox generator keyed by
(seed, stream), so replicate r of a run is ``generate(truth, T, seed,
stream=r)`` regardless of execution order; reports record the algorithm
identifier.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Kind, ModelSpec, PenalizedFit, TimeSeries, TruthSpec
from .solver import SolverOptions, detect_partition, detect_slope
from .theory import (
    GlobalBound,
    LocalizationPlan,
    TheoryParams,
    default_penalty,
    event_holds,
    gap_functions,
    global_bound,
)

__all__ = [
    "RNG_ALGORITHM",
    "default_threads",
    "generate",
    "McConfig",
    "McReport",
    "run_mc",
    "detect_for",
    "scaling_sweep",
]

RNG_ALGORITHM = "philox4x64(key=(seed, stream))"

_QUANTILES = (0.5, 0.9, 1.0)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), stream]))


def generate(truth: TruthSpec, T: int, seed: int, stream: int = 0) -> TimeSeries:
    """True signal plus sigma * iid standard Gaussian noise; deterministic
    in (truth, T, seed, stream)."""
    if T != truth.T:
        raise ValueError(f"T={T} inconsistent with truth (T={truth.T})")
    signal = truth.signal()
    sigma = truth.model.sigma
    if sigma == 0:
        return TimeSeries(signal)
    noise = _rng(seed, stream).standard_normal(T)
    return TimeSeries(signal + sigma * noise)


def detect_for(
    model: ModelSpec, x, beta: float, opts: SolverOptions | None = None
) -> PenalizedFit:
    """Route to the model-appropriate exact solver."""
    if model.kind is Kind.SLOPE:
        return detect_slope(x, model.sigma, beta, opts)
    return detect_partition(x, model, beta, opts)


@dataclass(frozen=True)
class McConfig:
    """One Monte Carlo experiment.

    ``beta=None`` resolves to the default penalty (2 + epsilon) ln T.
    ``plan=None`` derives localisation radii from the theory formulas
    (clipping vacuous spike radii to the segment cap, with a note in the
    report); an explicit tuple of n_j is used as given.
    """

    truth: TruthSpec
    replicates: int
    seed: int
    beta: float | None = None
    epsilon: float = 0.2
    plan: tuple[int, ...] | None = None
    record_locations: bool = False
    solver_options: SolverOptions | None = None

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    def resolved_beta(self) -> float:
        if self.beta is not None:
            return float(self.beta)
        return default_penalty(self.truth.T, self.epsilon)


@dataclass(frozen=True)
class McReport:
    """Aggregated Monte Carlo results with exact binomial standard errors."""

    replicates: int
    beta: float
    count_m_correct: int
    count_event: int | None
    empirical_prob: float | None
    std_error: float | None
    location_error_quantiles: dict
    theory_bound: GlobalBound | None
    plan: LocalizationPlan | None
    rng_algorithm: str
    seed: int
    runtime_seconds: float
    m_hats: tuple[int, ...]
    flags: tuple[str, ...] = ()
    records: tuple | None = None

    def __post_init__(self) -> None:
        if self.count_event is not None:
            if not (0 <= self.count_event <= self.count_m_correct <= self.replicates):
                raise ValueError("event/count ordering violated")


def _binom_se(k: int, n: int) -> float:
    p = k / n
    return math.sqrt(p * (1.0 - p) / n)


def _make_plan(config: McConfig, beta: float) -> tuple[LocalizationPlan | None, list[str]]:
    truth = config.truth
    flags: list[str] = []
    if config.plan is not None:
        return LocalizationPlan.for_truth(truth, tuple(config.plan)), flags
    if truth.m_star == 0:
        return LocalizationPlan((), math.inf), flags
    try:
        params = TheoryParams(config.epsilon, truth.T, truth.m_star, truth.model)
        a, _ = gap_functions(params, beta, truth.T)
        plan = LocalizationPlan.from_truth(truth, beta, a, on_vacuous="clip")
    except ValueError as err:
        flags.append(f"plan-unavailable: {err}")
        return None, flags
    if plan.clipped_changes:
        flags.append(
            "vacuous-radius-clipped-at-segment-cap: changes "
            + ",".join(str(j + 1) for j in plan.clipped_changes)
        )
    return plan, flags


def default_threads() -> int:
    """Worker count for the replicate fan-out, from PENCPT_THREADS."""
    raw = os.environ.get("PENCPT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_mc(config: McConfig, threads: int | None = None) -> McReport:
    """generate -> detect -> event per replicate, with common derived seeds.

    Replicate r draws from stream r of the keyed generator and results are
    aggregated by index, so reports are identical for any worker count.
    Failures carry the replicate index.
    """
    truth = config.truth
    beta = config.resolved_beta()
    t0 = time.perf_counter()
    flags: list[str] = []
    if threads is None:
        threads = default_threads()

    model = truth.model
    if model.sigma == 0:
        # noiseless generation; detection still needs a positive scale
        model = ModelSpec(model.kind, 1.0, model.alpha)
        flags.append("sigma=0: detection ran with sigma=1")

    plan, plan_flags = _make_plan(config, beta)
    flags.extend(plan_flags)

    m_hats = np.empty(config.replicates, dtype=np.int64)
    events = np.zeros(config.replicates, dtype=bool)
    abs_errors = np.full((config.replicates, truth.m_star), np.nan)
    records = [None] * config.replicates if config.record_locations else None

    def one(r: int) -> None:
        x = generate(truth, truth.T, config.seed, stream=r)
        try:
            fit = detect_for(model, x, beta, config.solver_options)
        except Exception as err:  # noqa: BLE001 - annotate and re-raise
            raise RuntimeError(f"solver failed on replicate {r}") from err
        m_hats[r] = fit.m
        if fit.m == truth.m_star and truth.m_star > 0:
            abs_errors[r] = [
                abs(th - ts) for th, ts in zip(fit.changepoints, truth.tau_star)
            ]
        if plan is not None:
            events[r] = event_holds(truth, fit, plan)
        if records is not None:
            records[r] = (r, fit.m, fit.changepoints, fit.objective)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(config.replicates)))
    else:
        for r in range(config.replicates):
            one(r)

    count_m = int(np.sum(m_hats == truth.m_star))
    if plan is not None:
        count_event = int(events.sum())
        emp = count_event / config.replicates
        se = _binom_se(count_event, config.replicates)
    else:
        count_event, emp, se = None, None, None

    quantiles: dict = {}
    if truth.m_star > 0 and count_m > 0:
        ok = ~np.isnan(abs_errors[:, 0])
        for q in _QUANTILES:
            quantiles[q] = tuple(
                float(np.quantile(abs_errors[ok, j], q)) for j in range(truth.m_star)
            )

    bound = None
    if plan is not None:
        try:
            params = TheoryParams(config.epsilon, truth.T, truth.m_star, truth.model)
            bound = global_bound(params, beta, plan)
        except ValueError as err:
            flags.append(f"bound-unavailable: {err}")

    return McReport(
        replicates=config.replicates,
        beta=beta,
        count_m_correct=count_m,
        count_event=count_event,
        empirical_prob=emp,
        std_error=se,
        location_error_quantiles=quantiles,
        theory_bound=bound,
        plan=plan,
        rng_algorithm=RNG_ALGORITHM,
        seed=config.seed,
        runtime_seconds=time.perf_counter() - t0,
        m_hats=tuple(int(v) for v in m_hats),
        flags=tuple(flags),
        records=tuple(records) if records is not None else None,
    )


def scaled_location_error(truth: TruthSpec, fit: PenalizedFit) -> float | None:
    """The per-model consistency quantity, defined only when m-hat = m*.

    Mean: max_j |tau-hat_j - tau*_j| Delta_j^2 (small is good).
    Slope: max_j |tau-hat_j - tau*_j|^3 Delta_j^2 (small is good).
    Spike: min_j Delta_j^2 / ((1-alpha^2)(1-alpha^(2|tau-hat_j - tau*_j|)))
    (large is good; infinite when a location is exact).
    """
    if fit.m != truth.m_star or truth.m_star == 0:
        return None
    errs = [abs(th - ts) for th, ts in zip(fit.changepoints, truth.tau_star)]
    deltas = truth.change_sizes
    kind = truth.model.kind
    if kind is Kind.MEAN:
        return max(e * d**2 for e, d in zip(errs, deltas))
    if kind is Kind.SLOPE:
        return max(e**3 * d**2 for e, d in zip(errs, deltas))
    alpha = truth.model.alpha
    vals = []
    for e, d in zip(errs, deltas):
        if e == 0:
            vals.append(math.inf)
        else:
            vals.append(d**2 / ((1.0 - alpha**2) * (1.0 - alpha ** (2 * e))))
    return min(vals)


def scaling_sweep(
    truth_for_T: Callable[[int], TruthSpec],
    T_grid: Sequence[int],
    replicates: int,
    seed: int,
    epsilon: float = 0.2,
    q: float = 0.9,
    reference_c: float | None = None,
) -> list[dict]:
    """Consistency-scaling table over a grid of series lengths.

    For each T the default penalty is used and the q- and (1-q)-quantiles
    of the scaled location error are recorded over the m-hat = m*
    replicates, next to a c * ln T reference column.  Needs >= 3 grid
    points to be a sweep.
    """
    if len(T_grid) < 3:
        raise ValueError("need at least 3 grid points")
    rows = []
    for ti, T in enumerate(T_grid):
        truth = truth_for_T(T)
        if truth.T != T:
            raise ValueError("truth_for_T returned an inconsistent length")
        beta = default_penalty(T, epsilon)
        correct = 0
        scaled: list[float] = []
        for r in range(replicates):
            x = generate(truth, T, seed, stream=ti * replicates + r)
            fit = detect_for(truth.model, x, beta)
            v = scaled_location_error(truth, fit)
            if v is not None:
                correct += 1
                scaled.append(v)
        row = {
            "T": T,
            "beta": beta,
            "replicates": replicates,
            "m_correct": correct,
            "frac_m_correct": correct / replicates,
            "log_T": math.log(T),
        }
        if scaled:
            arr = np.asarray(scaled)
            row[f"scaled_error_q{q}"] = float(np.quantile(arr, q))
            row[f"scaled_error_q{round(1 - q, 6)}"] = float(np.quantile(arr, 1 - q))
        if reference_c is not None:
            row["reference_c_log_T"] = reference_c * math.log(T)
        rows.append(row)
    return rows
