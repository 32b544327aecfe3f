"""Step and batch schedule properties."""

import math

import pytest
from hypothesis import given, strategies as st

from asgd.schedules import (
    ConstantStep,
    FixedBatch,
    IncreasingBatch,
    InvKStep,
    InvSqrtKLogStep,
    batch_at,
    check_batch_growth_conditions,
    check_step_conditions,
    clamp,
    growth_factor_at,
    step_at,
)

step_strategy = st.one_of(
    st.builds(ConstantStep, base=st.floats(1e-9, 10.0)),
    st.builds(
        InvKStep, base=st.floats(1e-9, 10.0), decay_every=st.integers(1, 50)
    ),
    st.builds(
        InvSqrtKLogStep, base=st.floats(1e-9, 10.0), decay_every=st.integers(1, 50)
    ),
)


@given(step_strategy, st.integers(1, 5000))
def test_steps_positive_and_bounded_by_base(schedule, k):
    value = step_at(schedule, k)
    assert 0.0 < value <= schedule.base


@given(step_strategy, st.integers(1, 4999))
def test_steps_non_increasing(schedule, k):
    assert step_at(schedule, k + 1) <= step_at(schedule, k) + 1e-18


@given(step_strategy, st.floats(1e-9, 1.0), st.integers(1, 1000))
def test_clamp_caps_and_is_idempotent(schedule, cap, k):
    clamped = clamp(schedule, cap)
    assert step_at(clamped, k) <= cap
    assert clamp(clamped, cap) == clamped


def test_step_values_follow_their_formulas():
    assert step_at(ConstantStep(base=0.5), 17) == 0.5
    assert step_at(InvKStep(base=1.0, decay_every=10), 25) == pytest.approx(1.0 / 3.0)
    # block index j = ceil(25 / 10) = 3: base / (sqrt(3) ln 3)
    expected = 1.0 / (math.sqrt(3.0) * math.log(3.0))
    assert step_at(InvSqrtKLogStep(base=1.0, decay_every=10), 25) == pytest.approx(expected)
    # sqrt(j) ln j < 1 at j = 2 would make the step rise; the guard holds it at base
    assert step_at(InvSqrtKLogStep(base=1.0), 2) == 1.0


@given(st.integers(1, 200), st.floats(1.01, 4.0), st.floats(0.1, 5.0), st.integers(1, 20))
def test_batch_multipliers_non_decreasing(k, exponent, growth, grow_every):
    batch = IncreasingBatch(size=3, exponent=exponent, growth=growth, grow_every=grow_every)
    assert growth_factor_at(batch, k + 1) >= growth_factor_at(batch, k) >= 1
    assert batch_at(batch, k) == 3 * growth_factor_at(batch, k)


def test_explicit_multipliers_repeat_last_entry():
    batch = IncreasingBatch(size=2, explicit=(1, 4, 9))
    assert [growth_factor_at(batch, k) for k in (1, 2, 3, 4, 99)] == [1, 4, 9, 9, 9]


def test_fixed_batch_total():
    assert batch_at(FixedBatch(7), 123) == 7
    assert growth_factor_at(FixedBatch(7), 123) == 1


def test_schedule_validation():
    with pytest.raises(ValueError):
        ConstantStep(base=0.0)
    with pytest.raises(ValueError):
        InvKStep(base=1.0, decay_every=0)
    with pytest.raises(ValueError):
        FixedBatch(0)
    with pytest.raises(ValueError):
        IncreasingBatch(size=1, exponent=1.0)
    with pytest.raises(ValueError):
        IncreasingBatch(size=1, explicit=(2, 1))
    with pytest.raises(ValueError):
        step_at(ConstantStep(base=1.0), 0)


def test_step_conditions_by_schedule_kind():
    cap = 0.01
    ok = check_step_conditions(InvSqrtKLogStep(base=0.01), cap)
    assert ok.passed
    over = check_step_conditions(InvSqrtKLogStep(base=0.02), cap)
    assert not over.passed and not over.checks["cap"]
    constant = check_step_conditions(ConstantStep(base=0.005), cap)
    assert not constant.passed and not constant.checks["sum_squares_converges"]
    invk = check_step_conditions(InvKStep(base=0.005), cap)
    assert invk.passed


def test_batch_growth_conditions():
    cap = 0.01
    good = check_batch_growth_conditions(
        IncreasingBatch(size=5, exponent=2.0), ConstantStep(base=0.005), cap
    )
    assert good.passed
    decaying = check_batch_growth_conditions(
        IncreasingBatch(size=5, exponent=2.0), InvKStep(base=0.005), cap
    )
    assert not decaying.passed and not decaying.checks["constant_step"]
    fixed = check_batch_growth_conditions(FixedBatch(5), ConstantStep(base=0.005), cap)
    assert not fixed.passed and not fixed.checks["reciprocals_summable"]
