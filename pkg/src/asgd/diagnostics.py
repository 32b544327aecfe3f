"""Analysis of runs: Lyapunov values, descent checking, rate fits, comparisons.

The Lyapunov function couples the optimality gap with a weighted sum of past
squared steps,

    V_k = f(x_k) - f_opt + sum_{j>=1} w_j ||x_{k+1-j} - x_{k-j}||^2,

using the weights produced by the delay analysis. The one-step descent check
estimates E[V_{k+1} | history] by Monte Carlo and tests it against the
analytic bound; rate fits are log-log least squares on ensemble means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .delays import DelayModel, LyapunovWeights, sample_delay_counts
from .problems import Problem
from .trace import RunTrace

__all__ = [
    "LyapunovValue",
    "DescentCheck",
    "RateFit",
    "CrossingEntry",
    "ComparisonReport",
    "lyapunov_value",
    "check_descent_inequality",
    "fit_rate",
    "ensemble_mean",
    "compare_to_threshold",
]


@dataclass(frozen=True)
class LyapunovValue:
    value: float
    optimality_gap: float
    staleness_penalty: float


def lyapunov_value(
    iterates: np.ndarray,
    objective_value: float,
    optimum_value: float,
    weights: LyapunovWeights,
) -> LyapunovValue:
    """Lyapunov value at the last of ``iterates`` (consecutive, oldest first).

    Steps older than the weight horizon contribute nothing; with a horizon at
    least as long as the history this is exact.
    """
    iterates = np.asarray(iterates, dtype=float)
    if iterates.ndim != 2 or iterates.shape[0] < 1:
        raise ValueError("iterates must be a non-empty (m, dim) array")
    gap = float(objective_value) - float(optimum_value)
    diffs = np.diff(iterates, axis=0)[::-1]  # most recent step first
    w = weights.values
    m = min(diffs.shape[0], w.size)
    penalty = float(w[:m] @ np.sum(diffs[:m] ** 2, axis=1)) if m else 0.0
    return LyapunovValue(
        value=gap + penalty, optimality_gap=gap, staleness_penalty=penalty
    )


@dataclass(frozen=True)
class DescentCheck:
    holds: bool
    lhs: float
    rhs: float
    std_error: float
    margin: float
    grad_norm_sq: float
    replicas: int


def check_descent_inequality(
    problem: Problem,
    iterates: np.ndarray,
    delay: DelayModel,
    gamma: float,
    batch_size: int,
    weights: LyapunovWeights,
    n_samples: int,
    rng: np.random.Generator,
    growth_factor: int = 1,
) -> DescentCheck:
    """Monte Carlo check of the one-step descent bound at a frozen state.

    Given the history x_0..x_k, the update collects batch_size * growth_factor
    stale gradients and applies step gamma / growth_factor. The bound tested:

        E[V_{k+1}] + (gamma * M / 2) ||grad f(x_k)||^2
            <= V_k + (w_1 + L / 2) * gamma^2 * M * sigma^2 / growth_factor

    with M = batch_size. ``holds`` allows three standard errors of slack on
    the Monte Carlo estimate. Feasibility step-halving is not modeled, so the
    frozen state must keep the one-step update feasible.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 replicas for a meaningful standard error")
    if gamma <= 0.0 or batch_size < 1 or growth_factor < 1:
        raise ValueError("gamma must be positive and batch/growth positive integers")
    iterates = np.asarray(iterates, dtype=float)
    if iterates.ndim != 2 or iterates.shape[0] < 1:
        raise ValueError("iterates must be a non-empty (m, dim) array")

    k = iterates.shape[0] - 1
    x = iterates[-1]
    f_x = problem.objective(x)
    grad = problem.gradient(x)
    gnsq = float(grad @ grad)
    current = lyapunov_value(iterates, f_x, problem.optimum_value, weights)

    w = weights.values
    head = float(w[0]) if w.size else 0.0
    # after the update every existing step shifts one weight down the sequence
    diffs = np.diff(iterates, axis=0)[::-1]
    m = min(diffs.shape[0], w.size - 1)
    shifted_penalty = float(w[1 : m + 1] @ np.sum(diffs[:m] ** 2, axis=1)) if m > 0 else 0.0

    total = batch_size * growth_factor
    scale = gamma / growth_factor
    replicas = np.empty(n_samples)
    for r in range(n_samples):
        dvals, dcounts = sample_delay_counts(delay, k + 1, total, rng)
        gsum = np.zeros(problem.dim)
        for d, c in zip(dvals, dcounts):
            gsum += problem.gradient_sum(iterates[k - int(d)], int(c), rng)
        x_next = x - scale * gsum
        step_sq = float(np.sum((x_next - x) ** 2))
        replicas[r] = (
            problem.objective(x_next)
            - problem.optimum_value
            + head * step_sq
            + shifted_penalty
        )

    mean_next = float(replicas.mean())
    std_error = float(replicas.std(ddof=1)) / math.sqrt(n_samples)
    lhs = mean_next + 0.5 * gamma * batch_size * gnsq
    noise = (head + 0.5 * problem.lipschitz) * gamma * gamma * batch_size
    rhs = current.value + noise * problem.noise_variance / growth_factor
    margin = rhs + 3.0 * std_error - lhs
    return DescentCheck(
        holds=margin >= 0.0,
        lhs=lhs,
        rhs=rhs,
        std_error=std_error,
        margin=margin,
        grad_norm_sq=gnsq,
        replicas=n_samples,
    )


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    k_lo: int
    k_hi: int
    n_points: int
    excluded_nonpositive: int

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "k_lo": self.k_lo,
            "k_hi": self.k_hi,
            "n_points": self.n_points,
            "excluded_nonpositive": self.excluded_nonpositive,
        }


def fit_rate(iterations: np.ndarray, values: np.ndarray, window: float = 0.5) -> RateFit:
    """Log-log least squares of ``values`` against iteration count.

    Fits the trailing ``window`` fraction of iterations (k = 0 and
    non-positive values are excluded from the logs). Intended for ensemble
    means; single traces are too noisy for a stable slope.
    """
    if not 0.0 < window <= 1.0:
        raise ValueError("window must lie in (0, 1]")
    iterations = np.asarray(iterations, dtype=float)
    values = np.asarray(values, dtype=float)
    if iterations.shape != values.shape or iterations.ndim != 1:
        raise ValueError("iterations and values must be matching 1-d arrays")
    k_hi = int(iterations.max())
    k_lo = max(1, int(math.ceil(k_hi * (1.0 - window))))
    in_window = (iterations >= k_lo) & (iterations >= 1)
    positive = values > 0.0
    keep = in_window & positive
    excluded = int(np.count_nonzero(in_window & ~positive))
    if np.count_nonzero(keep) < 5:
        raise ValueError("need at least 5 positive points in the fit window")
    lx = np.log(iterations[keep])
    ly = np.log(values[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0.0 else 1.0
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        k_lo=k_lo,
        k_hi=k_hi,
        n_points=int(np.count_nonzero(keep)),
        excluded_nonpositive=excluded,
    )


def ensemble_mean(traces: list[RunTrace], column: str = "grad_norm_sq"):
    """Pointwise mean and standard error of a column across aligned traces.

    Returns (k, mean, stderr, vtime_mean). All traces must share the same
    iteration grid.
    """
    if not traces:
        raise ValueError("need at least one trace")
    k = traces[0].k
    for t in traces[1:]:
        if t.k.shape != k.shape or np.any(t.k != k):
            raise ValueError("traces are not aligned on the same iteration grid")
    stack = np.stack([t.column(column) for t in traces])
    vstack = np.stack([t.vtime for t in traces])
    mean = stack.mean(axis=0)
    if len(traces) > 1:
        stderr = stack.std(axis=0, ddof=1) / math.sqrt(len(traces))
    else:
        stderr = np.zeros_like(mean)
    return k, mean, stderr, vstack.mean(axis=0)


@dataclass(frozen=True)
class CrossingEntry:
    label: str
    crossed: bool
    iteration: int | None
    vtime: float | None


@dataclass(frozen=True)
class ComparisonReport:
    threshold: float
    entries: dict[str, CrossingEntry]
    iteration_order: list[str]
    vtime_order: list[str]

    def as_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "entries": {
                label: {
                    "crossed": e.crossed,
                    "iteration": e.iteration,
                    "vtime": e.vtime,
                }
                for label, e in self.entries.items()
            },
            "iteration_order": self.iteration_order,
            "vtime_order": self.vtime_order,
        }


def compare_to_threshold(
    groups: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]],
    threshold: float,
) -> ComparisonReport:
    """First crossing of ``threshold`` per labeled group.

    Each group maps a label to (iterations, values, vtimes), typically
    ensemble means. Groups that never cross sort last (by label).
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    if not groups:
        raise ValueError("need at least one group")
    entries: dict[str, CrossingEntry] = {}
    for label, (ks, values, vtimes) in groups.items():
        below = np.nonzero(np.asarray(values) <= threshold)[0]
        if below.size:
            i = int(below[0])
            entries[label] = CrossingEntry(
                label=label,
                crossed=True,
                iteration=int(np.asarray(ks)[i]),
                vtime=float(np.asarray(vtimes)[i]),
            )
        else:
            entries[label] = CrossingEntry(label, False, None, None)

    def _it_key(label: str):
        e = entries[label]
        return (e.iteration if e.crossed else math.inf, label)

    def _vt_key(label: str):
        e = entries[label]
        return (e.vtime if e.crossed else math.inf, label)

    return ComparisonReport(
        threshold=threshold,
        entries=entries,
        iteration_order=sorted(entries, key=_it_key),
        vtime_order=sorted(entries, key=_vt_key),
    )
