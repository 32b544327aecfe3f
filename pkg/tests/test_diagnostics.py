"""Diagnostics: Lyapunov values, descent checks, rate fits, comparisons."""

import math

import numpy as np
import pytest

from asgd.delays import BoundedDelay, LyapunovWeights, lyapunov_weights
from asgd.diagnostics import (
    check_descent_inequality,
    compare_to_threshold,
    ensemble_mean,
    fit_rate,
    lyapunov_value,
)
from asgd.engine import RunConfig, run
from asgd.problems import QuadraticProblem
from asgd.schedules import ConstantStep, FixedBatch
from asgd.trace import RunTrace


def make_weights(values):
    values = np.asarray(values, dtype=float)
    return LyapunovWeights(
        values=values, head_finite=True, gamma=0.01, batch=1,
        lipschitz=1.0, truncation_error=0.0,
    )


def test_lyapunov_value_weighs_recent_steps():
    iterates = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 3.0]])
    # steps: d1 = (1, 0) then d2 = (0, 3); most recent step takes w_1
    got = lyapunov_value(iterates, 7.0, 2.0, make_weights([2.0, 0.5]))
    assert got.optimality_gap == 5.0
    assert got.staleness_penalty == pytest.approx(2.0 * 9.0 + 0.5 * 1.0)
    assert got.value == got.optimality_gap + got.staleness_penalty
    # horizon shorter than history: oldest step drops out
    short = lyapunov_value(iterates, 7.0, 2.0, make_weights([2.0]))
    assert short.staleness_penalty == pytest.approx(18.0)
    single = lyapunov_value(iterates[:1], 7.0, 2.0, make_weights([2.0]))
    assert single.staleness_penalty == 0.0
    with pytest.raises(ValueError):
        lyapunov_value(np.empty((0, 2)), 1.0, 0.0, make_weights([1.0]))


def test_lyapunov_value_agrees_with_engine_column():
    problem = QuadraticProblem(hessian=np.diag([1.0, 4.0]), noise_std=0.1)
    config = RunConfig(
        problem=problem, delay=BoundedDelay(2), step=ConstantStep(0.01),
        batch=FixedBatch(5), algorithm="async", iterations=30, seed=3,
        record_lyapunov=True, keep_iterates=True,
    )
    trace = run(config)
    weights = lyapunov_weights(
        config.delay, 0.01, 5, problem.lipschitz, horizon=min(30, 512)
    )
    for k in (1, 5, 17, 30):
        direct = lyapunov_value(
            trace.iterates[: k + 1], trace.objective[k],
            problem.optimum_value, weights,
        )
        assert direct.value == pytest.approx(trace.lyapunov[k], rel=1e-12)


def test_descent_inequality_holds_at_admissible_step():
    problem = QuadraticProblem(hessian=np.diag([1.0, 4.0]), noise_std=0.1)
    delay = BoundedDelay(2)
    gamma, batch = 0.01, 5
    weights = lyapunov_weights(delay, gamma, batch, problem.lipschitz)
    history = np.array([[3.0, -2.0], [2.9, -1.9], [2.8, -1.8]])
    check = check_descent_inequality(
        problem, history, delay, gamma, batch, weights,
        n_samples=400, rng=np.random.default_rng(0),
    )
    assert check.holds
    assert check.margin > 0.0
    assert check.lhs <= check.rhs + 3.0 * check.std_error
    assert check.replicas == 400


def test_descent_inequality_fails_beyond_the_cap():
    problem = QuadraticProblem(hessian=np.diag([1.0, 4.0]), noise_std=0.1)
    delay = BoundedDelay(0)
    weights = lyapunov_weights(delay, 1.0, 1, problem.lipschitz)
    check = check_descent_inequality(
        problem, np.array([[10.0, 10.0]]), delay, 1.0, 1, weights,
        n_samples=400, rng=np.random.default_rng(0),
    )
    assert not check.holds
    assert check.lhs > check.rhs


def test_descent_inequality_noise_term_scales_with_growth_factor():
    problem = QuadraticProblem(hessian=np.diag([1.0, 4.0]), noise_std=0.1)
    delay = BoundedDelay(0)
    weights = lyapunov_weights(delay, 0.01, 2, problem.lipschitz)
    state = np.array([[1.0, 1.0]])
    base = check_descent_inequality(
        problem, state, delay, 0.01, 2, weights,
        n_samples=100, rng=np.random.default_rng(0),
    )
    quartered = check_descent_inequality(
        problem, state, delay, 0.01, 2, weights,
        n_samples=100, rng=np.random.default_rng(0), growth_factor=4,
    )
    current = lyapunov_value(state, problem.objective(state[0]),
                             problem.optimum_value, weights).value
    assert base.rhs - current == pytest.approx(4.0 * (quartered.rhs - current))


def test_descent_inequality_validation():
    problem = QuadraticProblem(hessian=np.eye(2), noise_std=0.1)
    weights = lyapunov_weights(BoundedDelay(0), 0.1, 1, 1.0)
    state = np.array([[1.0, 1.0]])
    with pytest.raises(ValueError):
        check_descent_inequality(problem, state, BoundedDelay(0), 0.1, 1,
                                 weights, n_samples=50, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        check_descent_inequality(problem, state, BoundedDelay(0), -0.1, 1,
                                 weights, n_samples=100, rng=np.random.default_rng(0))


def test_fit_rate_recovers_exact_power_law():
    k = np.arange(0, 101)
    values = np.where(k > 0, 3.2 * np.maximum(k, 1) ** -1.5, 9.9)
    fit = fit_rate(k, values, window=0.5)
    assert fit.slope == pytest.approx(-1.5, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(3.2), abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert (fit.k_lo, fit.k_hi) == (50, 100)
    assert fit.n_points == 51
    assert fit.excluded_nonpositive == 0
    assert set(fit.as_dict()) == {
        "slope", "intercept", "r_squared", "k_lo", "k_hi",
        "n_points", "excluded_nonpositive",
    }


def test_fit_rate_ignores_head_and_counts_nonpositive_points():
    k = np.arange(0, 101)
    values = 2.0 * np.maximum(k, 1) ** -0.7
    values[:50] = 123.0  # outside the trailing window, must not matter
    values[60] = 0.0
    values[61] = -1.0
    fit = fit_rate(k, values, window=0.5)
    assert fit.slope == pytest.approx(-0.7, abs=1e-6)
    assert fit.excluded_nonpositive == 2
    assert fit.n_points == 49


def test_fit_rate_validation():
    k = np.arange(0, 10)
    with pytest.raises(ValueError):
        fit_rate(k, np.ones(10), window=0.0)
    with pytest.raises(ValueError):
        fit_rate(k, np.ones(9))
    with pytest.raises(ValueError):
        fit_rate(k, -np.ones(10))  # no positive points


def make_trace(values, vtime=None):
    values = np.asarray(values, dtype=float)
    k = np.arange(values.size, dtype=np.int64)
    zeros_i = np.zeros(values.size, dtype=np.int64)
    zeros_f = np.zeros(values.size)
    return RunTrace(
        k=k, gamma=zeros_f, batch=zeros_i, grad_norm_sq=values,
        objective=zeros_f, lyapunov=zeros_f, max_delay=zeros_i,
        mean_delay=zeros_f, rejections=zeros_i,
        vtime=zeros_f if vtime is None else np.asarray(vtime, dtype=float),
    )


def test_ensemble_mean_and_stderr():
    a = make_trace([4.0, 2.0, 1.0], vtime=[0.0, 1.0, 2.0])
    b = make_trace([2.0, 4.0, 1.0], vtime=[0.0, 3.0, 4.0])
    k, mean, stderr, vtime = ensemble_mean([a, b])
    np.testing.assert_array_equal(k, [0, 1, 2])
    np.testing.assert_allclose(mean, [3.0, 3.0, 1.0])
    # two samples: stderr = |a - b| / 2
    np.testing.assert_allclose(stderr, [1.0, 1.0, 0.0])
    np.testing.assert_allclose(vtime, [0.0, 2.0, 3.0])
    _, _, single_err, _ = ensemble_mean([a])
    np.testing.assert_array_equal(single_err, 0.0)
    with pytest.raises(ValueError):
        ensemble_mean([])
    with pytest.raises(ValueError):
        ensemble_mean([a, make_trace([1.0, 2.0])])


def test_compare_to_threshold_orders_and_censors():
    ks = np.arange(6)
    groups = {
        "fast": (ks, np.array([9.0, 8.0, 0.5, 0.4, 0.3, 0.2]),
                 ks * 100.0),
        "slow": (ks, np.array([9.0, 8.0, 7.0, 6.0, 0.9, 0.8]),
                 ks * 10.0),
        "stuck": (ks, np.full(6, 5.0), ks * 1.0),
    }
    report = compare_to_threshold(groups, threshold=1.0)
    assert report.entries["fast"].iteration == 2
    assert report.entries["slow"].iteration == 4
    assert not report.entries["stuck"].crossed
    assert report.entries["stuck"].iteration is None
    assert report.iteration_order == ["fast", "slow", "stuck"]
    # vtime order flips: fast pays 100 per iteration, slow pays 10
    assert report.vtime_order == ["slow", "fast", "stuck"]
    assert report.as_dict()["entries"]["fast"]["vtime"] == 200.0
    with pytest.raises(ValueError):
        compare_to_threshold(groups, threshold=0.0)
    with pytest.raises(ValueError):
        compare_to_threshold({}, threshold=1.0)
