"""Delay models: pmfs, samplers, weight recursion, admissibility."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from asgd.delays import (
    AnalysisUnavailableError,
    BoundedDelay,
    GrowingUniformDelay,
    PoissonDelay,
    SeriesBoundedDelay,
    SystemDelay,
    admissibility_check,
    delay_pmf,
    lyapunov_weights,
    sample_delay_counts,
    sample_delays,
    step_size_cap,
)
from asgd.schedules import ConstantStep, InvSqrtKLogStep

model_strategy = st.one_of(
    st.integers(0, 6).map(BoundedDelay),
    st.floats(0.5, 8.0).map(PoissonDelay),
    st.just(GrowingUniformDelay()),
    st.just(SeriesBoundedDelay(weights=(0.2, 0.5, 0.3))),
)


@given(model_strategy, st.integers(1, 40))
@settings(max_examples=60, deadline=None)
def test_pmf_sums_to_one_with_tail_folded_onto_k(model, k):
    total = sum(delay_pmf(model, k, i) for i in range(k + 1))
    assert total == pytest.approx(1.0, abs=1e-9)
    assert delay_pmf(model, k, k + 1) == 0.0


@given(model_strategy, st.integers(1, 40), st.integers(0, 64))
@settings(max_examples=60, deadline=None)
def test_sampled_delays_fit_in_usable_history(model, k, size):
    draws = sample_delays(model, k, size, np.random.default_rng(0))
    assert draws.shape == (size,)
    assert draws.dtype == np.int64
    if size:
        assert draws.min() >= 0 and draws.max() <= k - 1


def test_pmf_closed_forms():
    assert delay_pmf(BoundedDelay(3), 10, 2) == pytest.approx(0.25)
    # usable mass beyond k folds onto k: uniform {0..5} clipped at k = 3
    assert delay_pmf(BoundedDelay(5), 3, 3) == pytest.approx(0.5)
    assert delay_pmf(GrowingUniformDelay(), 7, 0) == 0.0
    assert delay_pmf(GrowingUniformDelay(), 7, 5) == pytest.approx(1.0 / 7.0)
    lam = 3.0
    assert delay_pmf(PoissonDelay(lam), 30, 4) == pytest.approx(
        float(stats.poisson.pmf(4, lam)), rel=1e-12
    )
    assert delay_pmf(PoissonDelay(lam), 5, 5) == pytest.approx(
        float(stats.poisson.sf(4, lam)), rel=1e-12
    )
    series = SeriesBoundedDelay(weights=(0.25, 0.5, 0.25))
    assert delay_pmf(series, 1, 1) == pytest.approx(0.75)


def test_count_sampler_matches_per_draw_sampler_in_distribution():
    model = PoissonDelay(3.0)
    k, n = 50, 20_000
    pmf = np.array([delay_pmf(model, k, i) for i in range(k + 1)])
    pmf[k - 1] += pmf[k]  # samplers clip at the usable history k - 1
    pmf = pmf[:k]

    singles = sample_delays(model, k, n, np.random.default_rng(11))
    hist = np.bincount(singles, minlength=k) / n
    values, counts = sample_delay_counts(model, k, n, np.random.default_rng(12))
    binned = np.zeros(k)
    binned[values] = counts / n

    tol = 5.0 * np.sqrt(pmf * (1.0 - pmf) / n) + 1e-12
    assert np.all(np.abs(hist - pmf) <= tol)
    assert np.all(np.abs(binned - pmf) <= tol)


@given(model_strategy, st.integers(2, 40), st.integers(1, 500))
@settings(max_examples=60, deadline=None)
def test_count_sampler_conserves_mass(model, k, total):
    values, counts = sample_delay_counts(model, k, total, np.random.default_rng(3))
    assert counts.sum() == total
    assert np.all(counts > 0)
    assert np.all(np.diff(values) > 0)
    assert values.min() >= 0 and values.max() <= k - 1


def test_samplers_are_deterministic_per_seed():
    model = PoissonDelay(2.5)
    a = sample_delays(model, 20, 100, np.random.default_rng(7))
    b = sample_delays(model, 20, 100, np.random.default_rng(7))
    np.testing.assert_array_equal(a, b)
    va, ca = sample_delay_counts(model, 20, 100, np.random.default_rng(7))
    vb, cb = sample_delay_counts(model, 20, 100, np.random.default_rng(7))
    np.testing.assert_array_equal(va, vb)
    np.testing.assert_array_equal(ca, cb)


def bounded_envelope_second_moment(max_delay: int) -> float:
    return max_delay * (max_delay + 1) * (2 * max_delay + 1) / 6.0


@pytest.mark.parametrize("max_delay", [2, 5, 20])
def test_bounded_head_uses_support_envelope(max_delay):
    gamma, batch, lipschitz = 0.01, 4, 3.0
    factor = 0.5 * gamma * batch * lipschitz**2
    weights = lyapunov_weights(BoundedDelay(max_delay), gamma, batch, lipschitz)
    assert weights.head == pytest.approx(
        factor * bounded_envelope_second_moment(max_delay), rel=1e-12
    )
    assert weights.truncation_error == 0.0
    # the envelope covers any pmf on the same support, skewed ones included
    skewed = BoundedDelay(max_delay, pmf=tuple(
        [1.0 - 0.01 * max_delay] + [0.01] * max_delay
    ))
    assert lyapunov_weights(skewed, gamma, batch, lipschitz).head == weights.head


@pytest.mark.parametrize("rate", [3.0, 10.0, 30.0])
def test_poisson_head_matches_second_moment(rate):
    gamma, batch, lipschitz = 0.002, 8, 1.5
    factor = 0.5 * gamma * batch * lipschitz**2
    weights = lyapunov_weights(PoissonDelay(rate), gamma, batch, lipschitz)
    assert weights.head == pytest.approx(factor * (rate + rate**2), rel=1e-11)
    assert 0.0 <= weights.truncation_error <= 1e-11 * weights.head


def test_weight_recursion_holds_with_equality():
    gamma, batch, lipschitz, lam = 0.01, 4, 2.0, 3.0
    factor = 0.5 * gamma * batch * lipschitz**2
    weights = lyapunov_weights(PoissonDelay(lam), gamma, batch, lipschitz, horizon=32)
    values = weights.values
    assert np.all(values >= 0.0)
    assert np.all(np.diff(values) <= 0.0)
    for j in range(1, 20):
        # sum_{i >= j} i * pmf(i) = lam * P(tau >= j - 1) for a Poisson tail
        increment = factor * lam * float(stats.poisson.sf(j - 2, lam))
        assert values[j - 1] - values[j] == pytest.approx(increment, rel=1e-10)


def test_explicit_series_weights_head():
    gamma, batch, lipschitz = 0.05, 2, 1.0
    factor = 0.5 * gamma * batch
    model = SeriesBoundedDelay(weights=(0.0, 0.5, 0.5))
    weights = lyapunov_weights(model, gamma, batch, lipschitz)
    assert weights.head == pytest.approx(factor * (0.5 + 4 * 0.5), rel=1e-12)


@pytest.mark.parametrize(
    "family,params",
    [("lognormal", (0.5, 0.75)), ("weibull", (1.5, 2.0))],
)
def test_family_series_head_matches_direct_bucket_sum(family, params):
    gamma, batch, lipschitz = 0.01, 4, 3.0
    factor = 0.5 * gamma * batch * lipschitz**2
    model = SeriesBoundedDelay(family=family, params=params)
    weights = lyapunov_weights(model, gamma, batch, lipschitz)
    if family == "lognormal":
        dist = stats.lognorm(s=params[1], scale=math.exp(params[0]))
    else:
        dist = stats.weibull_min(params[0], scale=params[1])
    idx = np.arange(1, 8193)
    direct = float(idx.astype(float) ** 2 @ np.diff(dist.cdf(np.arange(1, 8194))))
    assert weights.head == pytest.approx(factor * direct, rel=1e-9)
    assert weights.head_finite
    assert 0.0 <= weights.truncation_error <= 1e-10 * weights.head


def test_growing_uniform_head_is_infinite():
    weights = lyapunov_weights(GrowingUniformDelay(), 0.01, 4, 2.0)
    assert not weights.head_finite
    assert weights.head == math.inf
    assert step_size_cap(weights.head, 4, 2.0) == 0.0


def test_step_size_cap_formula():
    assert step_size_cap(0.0, 10, 2.0) == pytest.approx(1.0 / 20.0)
    assert step_size_cap(3.0, 10, 2.0) == pytest.approx(1.0 / (60.0 + 20.0))
    with pytest.raises(ValueError):
        step_size_cap(-1.0, 10, 2.0)
    with pytest.raises(ValueError):
        step_size_cap(1.0, 0, 2.0)


def test_admissibility_fixed_point_for_poisson():
    # cap depends on gamma through the head; gamma* = 1 / (4 M L) solves the
    # fixed point for a Poisson second moment of 12 (rate 3)
    batch, lipschitz = 10, 2.0
    gamma_star = 1.0 / (4.0 * batch * lipschitz)
    at_cap = admissibility_check(
        PoissonDelay(3.0), ConstantStep(gamma_star), batch, lipschitz
    )
    assert at_cap.admissible
    assert at_cap.step_cap == pytest.approx(gamma_star, rel=1e-10)
    above = admissibility_check(
        PoissonDelay(3.0), ConstantStep(gamma_star * (1.0 + 1e-6)), batch, lipschitz
    )
    assert not above.admissible
    assert "cap" in above.reason


def test_admissibility_uses_supremum_of_decaying_schedule():
    batch, lipschitz = 10, 2.0
    gamma_star = 1.0 / (4.0 * batch * lipschitz)
    schedule = InvSqrtKLogStep(base=gamma_star)
    report = admissibility_check(PoissonDelay(3.0), schedule, batch, lipschitz)
    assert report.admissible
    assert report.gamma_sup == gamma_star


def test_growing_uniform_is_symbolically_inadmissible():
    report = admissibility_check(
        GrowingUniformDelay(), ConstantStep(1e-12), batch=1, lipschitz=1.0
    )
    assert not report.admissible
    assert report.step_cap == 0.0
    assert report.head == math.inf
    assert "k^2" in report.reason


def test_system_model_refuses_closed_form_analysis():
    model = SystemDelay(workers=4)
    with pytest.raises(AnalysisUnavailableError):
        delay_pmf(model, 5, 1)
    with pytest.raises(AnalysisUnavailableError):
        sample_delays(model, 5, 3, np.random.default_rng(0))
    with pytest.raises(AnalysisUnavailableError):
        sample_delay_counts(model, 5, 3, np.random.default_rng(0))
    with pytest.raises(AnalysisUnavailableError):
        admissibility_check(model, ConstantStep(0.01), 4, 2.0)


def test_model_validation():
    with pytest.raises(ValueError):
        BoundedDelay(-1)
    with pytest.raises(ValueError):
        BoundedDelay(2, pmf=(0.5, 0.5))
    with pytest.raises(ValueError):
        BoundedDelay(1, pmf=(1.5, -0.5))
    with pytest.raises(ValueError):
        BoundedDelay(1, pmf=(0.7, 0.2))
    with pytest.raises(ValueError):
        PoissonDelay(0.0)
    with pytest.raises(ValueError):
        SeriesBoundedDelay()
    with pytest.raises(ValueError):
        SeriesBoundedDelay(weights=(0.5, 0.5), family="weibull", params=(1.0, 1.0))
    with pytest.raises(ValueError):
        SeriesBoundedDelay(family="pareto", params=(1.0, 1.0))
    with pytest.raises(ValueError):
        SeriesBoundedDelay(family="weibull", params=(0.5,))
    with pytest.raises(ValueError):
        SystemDelay(0)


def test_series_weights_analyze_without_summing_to_one_but_refuse_sampling():
    model = SeriesBoundedDelay(weights=(0.5, 0.2))
    weights = lyapunov_weights(model, 0.01, 2, 1.0)
    assert weights.head == pytest.approx(0.5 * 0.01 * 2 * 0.2, rel=1e-12)
    with pytest.raises(ValueError):
        sample_delays(model, 10, 4, np.random.default_rng(0))


def test_lyapunov_weights_validation():
    with pytest.raises(ValueError):
        lyapunov_weights(PoissonDelay(1.0), 0.0, 1, 1.0)
    with pytest.raises(ValueError):
        lyapunov_weights(PoissonDelay(1.0), 0.1, 0, 1.0)
    with pytest.raises(ValueError):
        lyapunov_weights(PoissonDelay(1.0), 0.1, 1, 0.0)
    with pytest.raises(ValueError):
        lyapunov_weights(PoissonDelay(1.0), 0.1, 1, 1.0, horizon=0)
