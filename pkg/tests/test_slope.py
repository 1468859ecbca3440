import numpy as np
import pytest

from pencpt.core import Kind, ModelSpec, TruthSpec
from pencpt.solver import (
    PRUNE_INEQUALITY,
    PRUNE_NONE,
    SolverOptions,
    brute_force_detect,
    detect_slope,
)

rng = np.random.default_rng(23)

SLOPE = ModelSpec(Kind.SLOPE, 1.0)


def _random_instance():
    T = int(rng.integers(6, 15))
    x = np.cumsum(rng.normal(size=T) * 0.4) + rng.uniform(-0.3, 0.3) * np.arange(T)
    return x, float(rng.uniform(0.5, 6.0))


def test_exact_kink_example():
    x = np.array([0.0, 1, 2, 3, 2, 1, 0])
    fit = detect_slope(x, sigma=1.0, beta=1.0)
    assert fit.changepoints == (4,)
    assert fit.raw_cost == pytest.approx(0.0, abs=1e-10)
    assert fit.objective == pytest.approx(1.0)
    assert fit.segmentation.params == pytest.approx((-1.0, 3.0, 0.0), abs=1e-9)


def test_exactly_linear_data_detects_nothing():
    x = 0.7 * np.arange(1, 13) - 2.0
    for beta in (0.1, 1.0, 10.0):
        fit = detect_slope(x, 1.0, beta)
        assert fit.m == 0
        assert fit.raw_cost == pytest.approx(0.0, abs=1e-10)


def test_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        detect_slope([1.0], 1.0, 1.0)
    with pytest.raises(ValueError):
        detect_slope([1.0, 2.0], 0.0, 1.0)
    with pytest.raises(ValueError):
        detect_slope([1.0, 2.0], 1.0, -1.0)
    with pytest.raises(ValueError):
        detect_slope([1.0, 2.0, 3.0], 1.0, 1.0, SolverOptions(max_changes=2))


def test_oracle_equivalence_random_instances():
    for _ in range(40):
        x, beta = _random_instance()
        dp = detect_slope(x, 1.0, beta)
        oracle = brute_force_detect(x, SLOPE, beta)
        assert dp.objective == pytest.approx(oracle.objective, rel=1e-7)
        assert dp.changepoints == oracle.changepoints


def test_objective_matches_exact_refit():
    # the DP objective must equal the constrained least-squares cost of the
    # returned knots plus the penalty (checked independently by fit_params)
    from pencpt.core import fit_params

    for _ in range(10):
        x, beta = _random_instance()
        fit = detect_slope(x, 1.0, beta)
        _, refit = fit_params(x, SLOPE, fit.changepoints)
        assert fit.raw_cost == pytest.approx(refit, rel=1e-8, abs=1e-10)


def test_pruning_preserves_objective_and_value_functions():
    for _ in range(15):
        x, beta = _random_instance()
        pruned = detect_slope(
            x, 1.0, beta,
            SolverOptions(pruning=PRUNE_INEQUALITY, keep_value_functions=True),
        )
        full = detect_slope(
            x, 1.0, beta,
            SolverOptions(pruning=PRUNE_NONE, keep_value_functions=True),
        )
        assert pruned.objective == pytest.approx(full.objective, rel=1e-10)
        assert pruned.changepoints == full.changepoints
        phis = np.linspace(-8, 8, 321)
        for fp, ff in zip(pruned.value_functions, full.value_functions):
            # pruning must not change the value function at all; in
            # particular stored functions never exceed the unpruned
            # candidate envelope
            assert np.max(np.abs(fp.evaluate(phis) - ff.evaluate(phis))) < 1e-6


def test_value_functions_are_valid_piecewise_quadratics():
    x, beta = _random_instance()
    fit = detect_slope(x, 1.0, beta, SolverOptions(keep_value_functions=True))
    assert len(fit.value_functions) == x.size
    for pq in fit.value_functions:
        assert pq.pieces[0].lo == -np.inf
        assert pq.pieces[-1].hi == np.inf
        assert all(p.a >= 0 for p in pq.pieces)


def test_final_value_function_minimum_equals_objective():
    x, beta = _random_instance()
    fit = detect_slope(x, 1.0, beta, SolverOptions(keep_value_functions=True))
    vmin, _ = fit.value_functions[-1].minimum()
    assert vmin == pytest.approx(fit.objective, rel=1e-9)


def test_m_hat_nonincreasing_in_beta():
    truth = TruthSpec(SLOPE, 40, (13, 26), (0.0, 6.0, -3.0, 4.0))
    x = truth.signal() + rng.normal(size=40) * 0.4
    betas = [0.2, 0.6, 1.5, 4.0, 10.0, 40.0]
    ms = [detect_slope(x, 0.4, b).m for b in betas]
    assert all(a >= b for a, b in zip(ms, ms[1:]))


def test_changepoint_at_first_position():
    # a kink right after the first point leaves theta_0 unidentified but
    # must not break the solver
    x = np.array([5.0, 0.0, -0.1, -0.2, -0.3, -0.4])
    fit = detect_slope(x, 1.0, 2.0)
    assert fit.raw_cost >= 0.0


def test_t_equals_two():
    fit = detect_slope([1.0, 3.0], 1.0, 1.0)
    assert fit.m == 0
    assert fit.raw_cost == pytest.approx(0.0, abs=1e-12)
