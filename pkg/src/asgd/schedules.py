"""Step-size and batch-size schedules, indexed by update number k >= 1.

Step schedules are positive and non-increasing; ``clamp`` caps them at the
admissible step bound so reproduction configs can opt in to the safe region.
Batch schedules report the total gradients collected per update and the
growth multiplier used by the increasing-batch algorithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

__all__ = [
    "ConstantStep",
    "InvKStep",
    "InvSqrtKLogStep",
    "StepSchedule",
    "FixedBatch",
    "IncreasingBatch",
    "BatchSchedule",
    "ConditionReport",
    "step_at",
    "clamp",
    "batch_at",
    "growth_factor_at",
    "check_step_conditions",
    "check_batch_growth_conditions",
]


def _check_base(base: float) -> None:
    if base <= 0.0:
        raise ValueError("step size must be positive")


def _check_every(every: int) -> None:
    if every < 1:
        raise ValueError("decay_every must be a positive integer")


@dataclass(frozen=True)
class ConstantStep:
    """gamma_k = base (optionally capped)."""

    base: float
    cap: float | None = None

    def __post_init__(self) -> None:
        _check_base(self.base)


@dataclass(frozen=True)
class InvKStep:
    """gamma_k = base / j with j = ceil(k / decay_every)."""

    base: float
    decay_every: int = 1
    cap: float | None = None

    def __post_init__(self) -> None:
        _check_base(self.base)
        _check_every(self.decay_every)


@dataclass(frozen=True)
class InvSqrtKLogStep:
    """gamma_k = base / max(1, sqrt(j) * ln j) with j = ceil(k / decay_every).

    The max(1, .) guard keeps the schedule non-increasing: sqrt(j) ln j dips
    below 1 at j = 2, and ln 1 = 0 would blow up at j = 1.
    """

    base: float
    decay_every: int = 1
    cap: float | None = None

    def __post_init__(self) -> None:
        _check_base(self.base)
        _check_every(self.decay_every)


StepSchedule = Union[ConstantStep, InvKStep, InvSqrtKLogStep]


def step_at(schedule: StepSchedule, k: int) -> float:
    """Step size for update k (1-based)."""
    if k < 1:
        raise ValueError("update index k must be >= 1")
    if isinstance(schedule, ConstantStep):
        value = schedule.base
    elif isinstance(schedule, InvKStep):
        j = math.ceil(k / schedule.decay_every)
        value = schedule.base / j
    elif isinstance(schedule, InvSqrtKLogStep):
        j = math.ceil(k / schedule.decay_every)
        value = schedule.base / max(1.0, math.sqrt(j) * math.log(j))
    else:
        raise TypeError(f"unknown step schedule {type(schedule).__name__}")
    if schedule.cap is not None:
        value = min(value, schedule.cap)
    return value


def clamp(schedule: StepSchedule, cap: float) -> StepSchedule:
    """Return the schedule capped at ``cap``; idempotent for a fixed cap."""
    if cap <= 0.0:
        raise ValueError("cap must be positive")
    new_cap = cap if schedule.cap is None else min(schedule.cap, cap)
    return replace(schedule, cap=new_cap)


@dataclass(frozen=True)
class FixedBatch:
    """Every update collects ``size`` gradients."""

    size: int

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("batch size must be a positive integer")


@dataclass(frozen=True)
class IncreasingBatch:
    """Update k collects n_k * size gradients.

    The multiplier is n_k = ceil(growth * j**exponent) with
    j = ceil(k / grow_every), or taken from ``explicit`` (n_1, n_2, ...) with
    the last entry repeated. Multipliers must be non-decreasing positive
    integers.
    """

    size: int
    exponent: float = 2.0
    growth: float = 1.0
    grow_every: int = 1
    explicit: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("batch size must be a positive integer")
        if self.explicit is not None:
            if len(self.explicit) == 0:
                raise ValueError("explicit multiplier list must be non-empty")
            if any(n < 1 for n in self.explicit):
                raise ValueError("batch multipliers must be positive integers")
            if any(b < a for a, b in zip(self.explicit, self.explicit[1:])):
                raise ValueError("batch multipliers must be non-decreasing")
            return
        if self.exponent <= 1.0:
            raise ValueError("exponent must exceed 1 for summable reciprocals")
        if self.growth <= 0.0:
            raise ValueError("growth must be positive")
        if self.grow_every < 1:
            raise ValueError("grow_every must be a positive integer")


BatchSchedule = Union[FixedBatch, IncreasingBatch]


def growth_factor_at(schedule: BatchSchedule, k: int) -> int:
    """Batch multiplier n_k; 1 for fixed batches."""
    if k < 1:
        raise ValueError("update index k must be >= 1")
    if isinstance(schedule, FixedBatch):
        return 1
    if isinstance(schedule, IncreasingBatch):
        if schedule.explicit is not None:
            idx = min(k, len(schedule.explicit)) - 1
            return int(schedule.explicit[idx])
        j = math.ceil(k / schedule.grow_every)
        return int(math.ceil(schedule.growth * j**schedule.exponent))
    raise TypeError(f"unknown batch schedule {type(schedule).__name__}")


def batch_at(schedule: BatchSchedule, k: int) -> int:
    """Total gradients collected by update k."""
    return schedule.size * growth_factor_at(schedule, k)


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of a symbolic convergence-condition check."""

    passed: bool
    checks: dict[str, bool]
    reasons: dict[str, str]


def check_step_conditions(
    schedule: StepSchedule, step_cap: float
) -> ConditionReport:
    """Check the decaying-step conditions for almost-sure convergence.

    Requires: gamma_1 <= step_cap (schedules are non-increasing, so the first
    step is the supremum), a divergent step sum, and a summable squared-step
    sum. Divergence/summability are decided symbolically per schedule kind.
    """
    checks: dict[str, bool] = {}
    reasons: dict[str, str] = {}

    first = step_at(schedule, 1)
    checks["cap"] = first <= step_cap
    reasons["cap"] = (
        f"sup_k gamma_k = {first:.6g} vs cap {step_cap:.6g}"
    )

    if isinstance(schedule, ConstantStep):
        checks["sum_diverges"] = True
        reasons["sum_diverges"] = "constant steps sum to infinity"
        checks["sum_squares_converges"] = False
        reasons["sum_squares_converges"] = "constant squared steps sum to infinity"
    elif isinstance(schedule, InvKStep):
        checks["sum_diverges"] = True
        reasons["sum_diverges"] = "harmonic order 1/k diverges"
        checks["sum_squares_converges"] = True
        reasons["sum_squares_converges"] = "order 1/k^2 is summable"
    elif isinstance(schedule, InvSqrtKLogStep):
        checks["sum_diverges"] = True
        reasons["sum_diverges"] = "order 1/(sqrt(k) log k) dominates 1/k"
        checks["sum_squares_converges"] = True
        reasons["sum_squares_converges"] = "order 1/(k log^2 k) is summable"
    else:
        raise TypeError(f"unknown step schedule {type(schedule).__name__}")

    return ConditionReport(passed=all(checks.values()), checks=checks, reasons=reasons)


def check_batch_growth_conditions(
    batch: BatchSchedule, schedule: StepSchedule, step_cap: float
) -> ConditionReport:
    """Check the increasing-batch conditions: constant capped step plus
    batch multipliers with summable reciprocals."""
    checks: dict[str, bool] = {}
    reasons: dict[str, str] = {}

    constant = isinstance(schedule, ConstantStep)
    checks["constant_step"] = constant
    reasons["constant_step"] = (
        "step schedule is constant" if constant else "step schedule must be constant"
    )
    first = step_at(schedule, 1)
    checks["cap"] = first <= step_cap
    reasons["cap"] = f"gamma = {first:.6g} vs cap {step_cap:.6g}"

    if isinstance(batch, IncreasingBatch) and batch.explicit is None:
        checks["reciprocals_summable"] = batch.exponent > 1.0
        reasons["reciprocals_summable"] = (
            f"n_k grows like k^{batch.exponent:g}; reciprocals summable iff exponent > 1"
        )
    elif isinstance(batch, IncreasingBatch):
        checks["reciprocals_summable"] = False
        reasons["reciprocals_summable"] = (
            "explicit multiplier list: reciprocal summability is undecidable"
        )
    else:
        checks["reciprocals_summable"] = False
        reasons["reciprocals_summable"] = "fixed batches have divergent reciprocal sum"

    return ConditionReport(passed=all(checks.values()), checks=checks, reasons=reasons)
