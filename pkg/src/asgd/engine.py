"""Server-side simulation of SGD with delayed gradients.

One run produces iterates x_0..x_K. Update k (1-based) collects a batch of
stochastic gradients, each evaluated at a stale iterate x_{k-1-tau} chosen by
the delay model, and applies

    sync     x_k = x_{k-1} - gamma_k * sum(batch)          (all gradients fresh)
    async    x_k = x_{k-1} - gamma_k * sum(batch)          (stale gradients)
    async_i  x_k = x_{k-1} - (gamma_k / n_k) * sum(batch)  (batch = n_k * size)

The sum is deliberately not averaged; ``average_gradients`` divides by the
collected batch size instead for sensitivity runs. Infeasible proposals are
step-halved up to 20 times reusing the same gradient sum, then the previous
iterate is kept; halvings are counted in the trace.

Gradient and delay randomness come from per-iteration child streams of the
run seed, so a recorded iteration can be replayed in isolation. Stale
iterates live in a ring buffer; requests older than its capacity are clipped
to the oldest retained iterate and counted in the summary.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as rngmod
from .delays import (
    AdmissibilityReport,
    AnalysisUnavailableError,
    DelayModel,
    SystemDelay,
    admissibility_check,
    lyapunov_weights,
    sample_delay_counts,
)
from .problems import Problem
from .schedules import (
    BatchSchedule,
    FixedBatch,
    IncreasingBatch,
    StepSchedule,
    growth_factor_at,
    step_at,
)
from .system import WorkerPool
from .trace import RunTrace

__all__ = ["ALGORITHMS", "InadmissibleConfigError", "RunConfig", "run"]

ALGORITHMS = ("sync", "async", "async_i")


class InadmissibleConfigError(RuntimeError):
    """The step schedule violates the delay model's admissibility cap."""

    def __init__(self, report: AdmissibilityReport):
        self.report = report
        super().__init__(
            f"inadmissible configuration: {report.reason}; "
            "pass allow_inadmissible to run anyway"
        )


@dataclass(frozen=True)
class RunConfig:
    problem: Problem
    delay: DelayModel
    step: StepSchedule
    batch: BatchSchedule
    algorithm: str
    iterations: int
    seed: int
    history_capacity: int = 4096
    allow_inadmissible: bool = False
    average_gradients: bool = False
    record_lyapunov: bool = False
    lyapunov_horizon: int = 512
    keep_iterates: bool = False
    record_delay_groups: bool = False
    admissibility_horizon: int = 64


def _validate(config: RunConfig) -> None:
    if config.algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    if config.iterations < 1:
        raise ValueError("iterations must be a positive integer")
    if config.history_capacity < 1:
        raise ValueError("history_capacity must be a positive integer")
    if config.algorithm == "async_i" and not isinstance(config.batch, IncreasingBatch):
        raise ValueError("async_i requires an increasing batch schedule")
    if config.algorithm in ("sync", "async") and not isinstance(config.batch, FixedBatch):
        raise ValueError(f"{config.algorithm} requires a fixed batch schedule")
    if config.record_lyapunov and isinstance(config.delay, SystemDelay):
        raise ValueError(
            "lyapunov recording needs analysis weights, unavailable for System delays"
        )
    if config.lyapunov_horizon < 1:
        raise ValueError("lyapunov_horizon must be a positive integer")


def _describe(obj) -> dict:
    out = {"kind": type(obj).__name__}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def _admissibility_summary(config: RunConfig) -> tuple[dict, Optional[AdmissibilityReport]]:
    if isinstance(config.delay, SystemDelay):
        return (
            {
                "checked": False,
                "admissible": None,
                "reason": "analysis unavailable: System delays have no dominating series",
            },
            None,
        )
    report = admissibility_check(
        config.delay,
        config.step,
        config.batch.size,
        config.problem.lipschitz,
        horizon=config.admissibility_horizon,
    )
    return (
        {
            "checked": True,
            "admissible": report.admissible,
            "gamma_sup": report.gamma_sup,
            "head_weight": report.head if math.isfinite(report.head) else None,
            "step_cap": report.step_cap,
            "reason": report.reason,
        },
        report,
    )


def run(config: RunConfig) -> RunTrace:
    """Simulate one run and return its trace (rows k = 0..iterations)."""
    _validate(config)
    problem = config.problem
    adm_summary, report = _admissibility_summary(config)
    if report is not None and not report.admissible and not config.allow_inadmissible:
        raise InadmissibleConfigError(report)

    K = config.iterations
    dim = problem.dim
    x = np.asarray(problem.start_point(), dtype=float)
    if not problem.feasible(x):
        raise ValueError("problem start point is infeasible")

    rows = min(config.history_capacity, K + 1)
    ring = np.empty((rows, dim))
    ring[0] = x

    k_col = np.arange(K + 1, dtype=np.int64)
    gamma_col = np.zeros(K + 1)
    batch_col = np.zeros(K + 1, dtype=np.int64)
    gnsq_col = np.empty(K + 1)
    obj_col = np.empty(K + 1)
    lyap_col = np.full(K + 1, math.nan)
    maxd_col = np.zeros(K + 1, dtype=np.int64)
    meand_col = np.zeros(K + 1)
    vtime_col = np.zeros(K + 1)
    rej_col = np.zeros(K + 1, dtype=np.int64)

    grad = problem.gradient(x)
    gnsq_col[0] = float(grad @ grad)
    obj_col[0] = problem.objective(x)

    weight_values = None
    sq_buffer = None
    if config.record_lyapunov:
        weights = lyapunov_weights(
            config.delay,
            step_at(config.step, 1),
            config.batch.size,
            problem.lipschitz,
            horizon=min(K, config.lyapunov_horizon),
        )
        weight_values = weights.values
        sq_buffer = np.zeros(weight_values.size)
        lyap_col[0] = obj_col[0] - problem.optimum_value

    iterates = None
    if config.keep_iterates:
        iterates = np.empty((K + 1, dim))
        iterates[0] = x
    delay_groups: list | None = [] if config.record_delay_groups else None

    pool = None
    sync_quotas = None
    if isinstance(config.delay, SystemDelay):
        pool = WorkerPool(config.delay, config.seed)
        if config.algorithm == "sync":
            n_workers = config.delay.workers
            base, extra = divmod(config.batch.size, n_workers)
            sync_quotas = np.array(
                [base + (1 if w < extra else 0) for w in range(n_workers)],
                dtype=np.int64,
            )

    overflow_gradients = 0
    total_rejections = 0
    sync_clock = 0.0

    for k in range(1, K + 1):
        gamma = step_at(config.step, k)
        n_k = growth_factor_at(config.batch, k)
        total = config.batch.size * n_k
        current = k - 1

        if config.algorithm == "sync":
            versions = np.array([current], dtype=np.int64)
            counts = np.array([total], dtype=np.int64)
            max_delay = 0
            mean_delay = 0.0
            if pool is not None:
                sync_clock += pool.sync_round(sync_quotas)
                vtime = sync_clock
            else:
                vtime = float(k)
        elif pool is not None:
            res = pool.collect(total, current)
            versions, counts = res.versions, res.counts
            max_delay = res.max_delay
            mean_delay = res.delay_sum / total
            vtime = res.time
        else:
            dvals, dcounts = sample_delay_counts(
                config.delay, k, total, rngmod.stream(config.seed, rngmod.DELAYS, k)
            )
            versions = (current - dvals)[::-1]
            counts = dcounts[::-1]
            max_delay = int(dvals[-1])
            mean_delay = float(dvals @ dcounts) / total
            vtime = float(k)

        if delay_groups is not None:
            delay_groups.append((versions.copy(), counts.copy()))

        grad_rng = rngmod.stream(config.seed, rngmod.GRADIENTS, k)
        gsum = np.zeros(dim)
        oldest = k - rows
        for v, c in zip(versions, counts):
            v_eff = int(v)
            if v_eff < oldest:
                overflow_gradients += int(c)
                v_eff = oldest
            gsum += problem.gradient_sum(ring[v_eff % rows], int(c), grad_rng)

        if config.average_gradients:
            scale = gamma / total
        elif config.algorithm == "async_i":
            scale = gamma / n_k
        else:
            scale = gamma

        prop = x - scale * gsum
        rejections = 0
        if not problem.feasible(prop):
            accepted = False
            shrunk = scale
            for _ in range(20):
                rejections += 1
                shrunk *= 0.5
                prop = x - shrunk * gsum
                if problem.feasible(prop):
                    accepted = True
                    break
            if not accepted:
                prop = x.copy()
        total_rejections += rejections

        step_vec = prop - x
        x = prop
        ring[k % rows] = x
        if iterates is not None:
            iterates[k] = x

        grad = problem.gradient(x)
        gamma_col[k] = gamma
        batch_col[k] = total
        gnsq_col[k] = float(grad @ grad)
        obj_col[k] = problem.objective(x)
        maxd_col[k] = max_delay
        meand_col[k] = mean_delay
        vtime_col[k] = vtime
        rej_col[k] = rejections

        if weight_values is not None:
            sq_buffer[1:] = sq_buffer[:-1]
            sq_buffer[0] = float(step_vec @ step_vec)
            m = min(k, weight_values.size)
            lyap_col[k] = (obj_col[k] - problem.optimum_value) + float(
                weight_values[:m] @ sq_buffer[:m]
            )

    summary = {
        "schema_version": 1,
        "algorithm": config.algorithm,
        "iterations": K,
        "seed": config.seed,
        "problem": {
            "name": problem.name,
            "dim": problem.dim,
            "lipschitz": problem.lipschitz,
            "noise_variance": problem.noise_variance,
            "optimum_value": problem.optimum_value,
        },
        "step": _describe(config.step),
        "batch": _describe(config.batch),
        "delay": _describe(config.delay),
        "admissibility": adm_summary,
        "final": {
            "grad_norm_sq": float(gnsq_col[-1]),
            "objective": float(obj_col[-1]),
            "vtime": float(vtime_col[-1]),
        },
        "history_overflow_gradients": overflow_gradients,
        "total_rejections": total_rejections,
    }

    return RunTrace(
        k=k_col,
        gamma=gamma_col,
        batch=batch_col,
        grad_norm_sq=gnsq_col,
        objective=obj_col,
        lyapunov=lyap_col,
        max_delay=maxd_col,
        mean_delay=meand_col,
        vtime=vtime_col,
        rejections=rej_col,
        summary=summary,
        iterates=iterates,
        delay_groups=delay_groups,
    )
