"""Gradient-delay models: sampling, clipped pmfs, and admissibility analysis.

A delay model describes the staleness tau of each gradient arriving at update
k: the gradient was computed at iterate x_{k-1-tau}. Distribution models
(Bounded, Poisson, GrowingUniform, SeriesBounded) give iid delays with a known
pmf; the System model realizes delays through a simulated worker pool and has
no closed-form pmf, so its analysis raises AnalysisUnavailableError.

Admissibility of a step schedule against a delay model is decided through the
weight recursion

    w_j = w_{j+1} + (gamma * M * L^2 / 2) * sum_{i >= j} i * a_i,

where {a_i} dominates the delay pmf for every k. A finite leading weight
w_1 = (gamma * M * L^2 / 2) * sum_i i^2 a_i caps the usable step size at
1 / (2 M w_1 + M L); a divergent sum means no positive step of the given
order is admissible.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import stats
from scipy.special import gammaincc

from .schedules import StepSchedule, step_at

__all__ = [
    "AnalysisUnavailableError",
    "BoundedDelay",
    "PoissonDelay",
    "GrowingUniformDelay",
    "SeriesBoundedDelay",
    "SystemDelay",
    "DelayModel",
    "LyapunovWeights",
    "AdmissibilityReport",
    "delay_pmf",
    "sample_delays",
    "sample_delay_counts",
    "lyapunov_weights",
    "step_size_cap",
    "admissibility_check",
]

# Mass below this is treated as an analytic tail: the count sampler lumps it
# into one bucket and resolves hits (if any) by an exact inverse-cdf walk.
_TAIL_EPS = 1e-18

# Relative truncation target for leading-weight computation.
_HEAD_RTOL = 1e-13

# Verdict tolerance: a step exactly at the cap must not flip on rounding noise.
_CAP_RTOL = 1e-12


class AnalysisUnavailableError(RuntimeError):
    """The delay model admits no closed-form pmf or weight analysis."""


@dataclass(frozen=True)
class BoundedDelay:
    """Delays supported on {0..max_delay}, uniform unless a pmf is given."""

    max_delay: int
    pmf: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.max_delay < 0:
            raise ValueError("max_delay must be non-negative")
        if self.pmf is not None:
            q = np.asarray(self.pmf, dtype=float)
            if q.shape != (self.max_delay + 1,):
                raise ValueError("pmf must have length max_delay + 1")
            if np.any(q < 0.0):
                raise ValueError("pmf entries must be non-negative")
            if abs(float(q.sum()) - 1.0) > 1e-9:
                raise ValueError("pmf must sum to 1")


@dataclass(frozen=True)
class PoissonDelay:
    """tau ~ Poisson(rate), identical at every update."""

    rate: float

    def __post_init__(self) -> None:
        if self.rate <= 0.0:
            raise ValueError("rate must be positive")


@dataclass(frozen=True)
class GrowingUniformDelay:
    """tau_k uniform on {1..k}: staleness grows with the iteration count."""


@dataclass(frozen=True)
class SeriesBoundedDelay:
    """Delays dominated by a series a_i with finite sum_i i^2 a_i.

    Either an explicit ``weights`` tuple (a_0, a_1, ...) or a named heavy-tail
    family: ``("lognormal", mu, sigma)`` for floor(exp(N(mu, sigma^2))) or
    ``("weibull", shape, scale)`` for floor(Weibull(shape, scale)). Explicit
    weights are samplable only when they form a pmf; analysis does not require
    that.
    """

    weights: tuple[float, ...] | None = None
    family: str | None = None
    params: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if (self.weights is None) == (self.family is None):
            raise ValueError("provide exactly one of weights or family")
        if self.weights is not None:
            q = np.asarray(self.weights, dtype=float)
            if q.ndim != 1 or q.size == 0:
                raise ValueError("weights must be a non-empty sequence")
            if np.any(q < 0.0):
                raise ValueError("weights must be non-negative")
            object.__setattr__(self, "weights", tuple(float(v) for v in q))
            return
        if self.family not in ("lognormal", "weibull"):
            raise ValueError("family must be 'lognormal' or 'weibull'")
        if len(self.params) != 2:
            raise ValueError("params must hold exactly two values for a family model")
        if self.family == "lognormal" and self.params[1] <= 0.0:
            raise ValueError("lognormal sigma must be positive")
        if self.family == "weibull" and (self.params[0] <= 0.0 or self.params[1] <= 0.0):
            raise ValueError("weibull shape and scale must be positive")


@dataclass(frozen=True)
class SystemDelay:
    """Delays produced by a pool of workers with Exp(rate_w) service times.

    Rates are drawn once per worker from Gamma(2, 1); ``redraw_rates`` draws a
    fresh rate for every task instead.
    """

    workers: int
    redraw_rates: bool = False

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be a positive integer")


DelayModel = Union[
    BoundedDelay, PoissonDelay, GrowingUniformDelay, SeriesBoundedDelay, SystemDelay
]


def _family_dist(model: SeriesBoundedDelay):
    if model.family == "lognormal":
        mu, sigma = model.params
        return stats.lognorm(s=sigma, scale=math.exp(mu))
    shape, scale = model.params
    return stats.weibull_min(shape, scale=scale)


def _far_quantile(sf, start: int) -> int:
    """Smallest power-of-two point past ``start`` with sf below _TAIL_EPS,
    bounded at 1e6. Robust where isf underflows to nan."""
    hi = max(8, start)
    while float(sf(hi)) > _TAIL_EPS and hi < 1_000_000:
        hi *= 2
    return min(hi, 1_000_000)


@functools.lru_cache(maxsize=128)
def _unbounded_prefix(model) -> tuple[np.ndarray, np.ndarray]:
    """(pmf, cumulative) of an unbounded model out to negligible tail mass."""
    if isinstance(model, PoissonDelay):
        dist = stats.poisson(model.rate)
        hi = _far_quantile(dist.sf, int(model.rate + 10.0 * math.sqrt(model.rate)) + 10) + 2
        pmf = dist.pmf(np.arange(hi))
    else:
        dist = _family_dist(model)
        hi = _far_quantile(dist.sf, int(math.ceil(dist.isf(0.25)))) + 2
        pmf = np.diff(dist.cdf(np.arange(hi + 1)))  # P(floor(X) = i), F(0) = 0
    return pmf, np.cumsum(pmf)


def _pmf_range(model, lo: int, hi: int) -> np.ndarray:
    """Exact pmf values on [lo, hi) past the cached prefix."""
    if isinstance(model, PoissonDelay):
        return stats.poisson(model.rate).pmf(np.arange(lo, hi))
    dist = _family_dist(model)
    return np.diff(dist.cdf(np.arange(lo, hi + 1)))


def _finite_pmf(model, k: int) -> np.ndarray:
    """Unclipped pmf vector for models with finite support (index = delay)."""
    if isinstance(model, BoundedDelay):
        if model.pmf is not None:
            q = np.asarray(model.pmf, dtype=float)
        else:
            q = np.full(model.max_delay + 1, 1.0 / (model.max_delay + 1))
        return q / q.sum()
    if isinstance(model, GrowingUniformDelay):
        q = np.full(k + 1, 1.0 / k)
        q[0] = 0.0
        return q
    if isinstance(model, SeriesBoundedDelay) and model.weights is not None:
        q = np.asarray(model.weights, dtype=float)
        total = float(q.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError("series weights do not sum to 1; sampling requires a pmf")
        return q / total
    raise TypeError(f"model {type(model).__name__} has no finite pmf")


def _is_unbounded(model: DelayModel) -> bool:
    return isinstance(model, PoissonDelay) or (
        isinstance(model, SeriesBoundedDelay) and model.weights is None
    )


def _clipped_pmf(model: DelayModel, k: int, cap: int) -> np.ndarray:
    """pmf of min(tau_k, cap) as a vector over {0..cap}."""
    if isinstance(model, SystemDelay):
        raise AnalysisUnavailableError(
            "System delays have no closed-form pmf; they are realized by the worker pool"
        )
    if cap == 0:
        return np.array([1.0])
    if _is_unbounded(model):
        pmf, cum = _unbounded_prefix(model)
        out = np.zeros(cap + 1)
        if cap <= pmf.size:
            out[:cap] = pmf[:cap]
            out[cap] = max(0.0, 1.0 - float(cum[cap - 1]))
        else:
            out[: pmf.size] = pmf
            mid = _pmf_range(model, pmf.size, cap)
            out[pmf.size : cap] = mid
            out[cap] = max(0.0, 1.0 - float(cum[-1]) - float(mid.sum()))
        return out
    q = _finite_pmf(model, k)
    out = np.zeros(cap + 1)
    if q.size <= cap + 1:
        out[: q.size] = q
    else:
        out[:cap] = q[:cap]
        out[cap] = float(q[cap:].sum())
    return out


def delay_pmf(model: DelayModel, k: int, i: int) -> float:
    """P(min(tau_k, k) = i): the delay pmf at update k, mass beyond k folded onto k."""
    if k < 1:
        raise ValueError("update index k must be >= 1")
    if i < 0:
        raise ValueError("delay must be non-negative")
    if i > k:
        return 0.0
    return float(_clipped_pmf(model, k, k)[i])


def sample_delays(
    model: DelayModel, k: int, size: int, rng: np.random.Generator
) -> np.ndarray:
    """iid per-gradient delays for update k, clipped to the usable history k-1."""
    if k < 1:
        raise ValueError("update index k must be >= 1")
    if size < 0:
        raise ValueError("size must be non-negative")
    if isinstance(model, SystemDelay):
        raise AnalysisUnavailableError(
            "System delays are realized by the worker pool, not sampled from a pmf"
        )
    if k == 1:
        return np.zeros(size, dtype=np.int64)
    if isinstance(model, BoundedDelay):
        if model.pmf is None:
            raw = rng.integers(0, model.max_delay + 1, size=size)
        else:
            raw = rng.choice(model.max_delay + 1, size=size, p=_finite_pmf(model, k))
    elif isinstance(model, PoissonDelay):
        raw = rng.poisson(model.rate, size=size)
    elif isinstance(model, GrowingUniformDelay):
        raw = rng.integers(1, k + 1, size=size)
    elif isinstance(model, SeriesBoundedDelay):
        if model.weights is not None:
            q = _finite_pmf(model, k)
            raw = rng.choice(q.size, size=size, p=q)
        elif model.family == "lognormal":
            mu, sigma = model.params
            raw = np.floor(rng.lognormal(mu, sigma, size=size))
        else:
            shape, scale = model.params
            raw = np.floor(scale * rng.weibull(shape, size=size))
    else:
        raise TypeError(f"unknown delay model {type(model).__name__}")
    return np.minimum(raw.astype(np.int64), k - 1)


def sample_delay_counts(
    model: DelayModel, k: int, total: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Counts of iid delays for update k: (distinct delays ascending, counts).

    Distributionally identical to binning ``sample_delays`` output but costs
    O(support) instead of O(total): a multinomial over the exact clipped pmf,
    with far-tail mass lumped into one analytic bucket and resolved per draw.
    """
    if total < 1:
        raise ValueError("total must be a positive integer")
    if isinstance(model, SystemDelay):
        raise AnalysisUnavailableError(
            "System delays are realized by the worker pool, not sampled from a pmf"
        )
    if k < 1:
        raise ValueError("update index k must be >= 1")
    if k == 1:
        return np.array([0], dtype=np.int64), np.array([total], dtype=np.int64)
    cap = k - 1
    pvals = _clipped_pmf(model, k, min(cap, _support_cut(model, cap)))
    pvals = pvals.copy()
    pvals[-1] = max(0.0, 1.0 - float(pvals[:-1].sum()))
    counts = rng.multinomial(total, pvals)
    cut = pvals.size - 1
    if _is_unbounded(model) and cut < cap and counts[cut] > 0:
        # resolve far-tail draws exactly by walking the pmf past the cut
        extra = _resolve_tail(model, cut, cap, int(counts[cut]), float(pvals[cut]), rng)
        counts = np.concatenate((counts[:cut], np.zeros(cap - cut + 1, dtype=counts.dtype)))
        for value in extra:
            counts[value] += 1
    nz = np.nonzero(counts)[0]
    return nz.astype(np.int64), counts[nz].astype(np.int64)


def _support_cut(model: DelayModel, cap: int) -> int:
    """Bucket boundary for the count sampler: full support if small, else the
    point beyond which total mass is below _TAIL_EPS."""
    if isinstance(model, BoundedDelay):
        return model.max_delay
    if isinstance(model, GrowingUniformDelay):
        return cap
    if isinstance(model, SeriesBoundedDelay) and model.weights is not None:
        return len(model.weights) - 1
    pmf, _ = _unbounded_prefix(model)
    return pmf.size


def _resolve_tail(
    model, cut: int, cap: int, hits: int, tail_mass: float, rng: np.random.Generator
) -> list[int]:
    """Inverse-cdf walk for draws that landed in the far-tail bucket."""
    out = []
    for _ in range(hits):
        u = rng.random() * tail_mass
        acc = 0.0
        i = cut
        while i < cap:
            chunk = _pmf_range(model, i, min(i + 64, cap))
            for p in chunk:
                acc += float(p)
                if acc >= u:
                    break
                i += 1
            if acc >= u:
                break
        out.append(min(i, cap))
    return out


@dataclass(frozen=True)
class LyapunovWeights:
    """Weights w_1..w_H on past squared steps in the Lyapunov function.

    ``values[j-1]`` is w_j; the sequence is non-negative, non-increasing, and
    satisfies the defining recursion with equality over the computed horizon.
    ``head_finite`` is False when the dominating series has a divergent second
    moment, in which case ``head`` is infinite and no positive step size of
    the analyzed order is admissible. ``truncation_error`` bounds how much the
    computed head can undershoot the exact infinite-series value.
    """

    values: np.ndarray
    head_finite: bool
    gamma: float
    batch: int
    lipschitz: float
    truncation_error: float

    @property
    def head(self) -> float:
        if not self.head_finite:
            return math.inf
        return float(self.values[0]) if self.values.size else 0.0


def _dominating_series(model: DelayModel, min_len: int) -> tuple[np.ndarray, float]:
    """Series a_1..a_S dominating P(tau_k = i) for all k, plus an upper bound
    on the neglected sum_{i > S} i^2 a_i (inf when divergent)."""
    if isinstance(model, BoundedDelay):
        a = np.zeros(max(min_len, model.max_delay))
        a[: model.max_delay] = 1.0  # deterministic-support envelope
        return a, 0.0
    if isinstance(model, GrowingUniformDelay):
        # tight envelope: P(tau_k = i) = 1/k <= 1/i for every k >= i
        idx = np.arange(1, min_len + 1, dtype=float)
        return 1.0 / idx, math.inf
    if isinstance(model, SeriesBoundedDelay) and model.weights is not None:
        body = np.asarray(model.weights[1:], dtype=float)
        a = np.zeros(max(min_len, body.size))
        a[: body.size] = body
        return a, 0.0
    if isinstance(model, PoissonDelay):
        lam = model.rate
        exact = lam + lam * lam

        def tail(s: int) -> float:
            return lam * lam * float(stats.poisson.sf(s - 2, lam)) + lam * float(
                stats.poisson.sf(s - 1, lam)
            )

        s = max(min_len, int(lam + 10.0 * math.sqrt(lam)) + 20)
        while tail(s) > _HEAD_RTOL * exact:
            s *= 2
        a = stats.poisson.pmf(np.arange(1, s + 1), lam)
        return a, tail(s)
    if isinstance(model, SeriesBoundedDelay):
        dist = _family_dist(model)
        if model.family == "lognormal":
            mu, sigma = model.params

            def tail(s: int) -> float:
                z = (mu + 2.0 * sigma * sigma - math.log(s)) / sigma
                return math.exp(2.0 * mu + 2.0 * sigma * sigma) * 0.5 * math.erfc(
                    -z / math.sqrt(2.0)
                )

        else:
            shape, scale = model.params
            order = 1.0 + 2.0 / shape

            def tail(s: int) -> float:
                return scale * scale * math.gamma(order) * float(
                    gammaincc(order, (s / scale) ** shape)
                )

        def body(s: int) -> np.ndarray:
            return np.diff(dist.cdf(np.arange(1, s + 2)))  # a_i = F(i+1) - F(i)

        s = max(min_len, int(math.ceil(dist.isf(0.5))) + 8)
        a = body(s)
        partial = float(np.arange(1, s + 1).astype(float) ** 2 @ a)
        # extend until the analytic tail is negligible next to the partial sum;
        # very heavy tails stop at the support bound and report the remainder
        while tail(s) > _HEAD_RTOL * max(partial, 1e-300) and s < 4_194_304:
            s *= 2
            a = body(s)
            partial = float(np.arange(1, s + 1).astype(float) ** 2 @ a)
        return a, tail(s)
    raise AnalysisUnavailableError(
        "System delays admit no dominating series; admissibility analysis is unavailable"
    )


def lyapunov_weights(
    model: DelayModel,
    gamma: float,
    batch: int,
    lipschitz: float,
    horizon: int = 64,
) -> LyapunovWeights:
    """Solve the weight recursion for the dominating series of ``model``.

    Weights satisfy w_j = w_{j+1} + (gamma * batch * L^2 / 2) * sum_{i>=j} i a_i
    with w beyond the series support equal to zero, giving the leading weight
    w_1 = (gamma * batch * L^2 / 2) * sum_i i^2 a_i.
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    if batch < 1:
        raise ValueError("batch must be a positive integer")
    if lipschitz <= 0.0:
        raise ValueError("lipschitz must be positive")
    if horizon < 1:
        raise ValueError("horizon must be a positive integer")
    a, tail = _dominating_series(model, horizon)
    factor = 0.5 * gamma * batch * lipschitz * lipschitz
    idx = np.arange(1, a.size + 1, dtype=float)
    first_moment_tails = np.cumsum((idx * a)[::-1])[::-1]  # sum_{i>=j} i a_i
    values = factor * np.cumsum(first_moment_tails[::-1])[::-1]
    return LyapunovWeights(
        values=values[:horizon].copy(),
        head_finite=math.isfinite(tail),
        gamma=gamma,
        batch=batch,
        lipschitz=lipschitz,
        truncation_error=factor * tail if math.isfinite(tail) else math.inf,
    )


def step_size_cap(head: float, batch: int, lipschitz: float) -> float:
    """Largest admissible step: 1 / (2 * batch * head + batch * lipschitz).

    An infinite leading weight returns 0.0: no positive step is admissible.
    """
    if batch < 1:
        raise ValueError("batch must be a positive integer")
    if lipschitz <= 0.0:
        raise ValueError("lipschitz must be positive")
    if head < 0.0:
        raise ValueError("head weight must be non-negative")
    if math.isinf(head):
        return 0.0
    return 1.0 / (2.0 * batch * head + batch * lipschitz)


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    gamma_sup: float
    head: float
    step_cap: float
    weights: LyapunovWeights | None
    reason: str


def admissibility_check(
    model: DelayModel,
    schedule: StepSchedule,
    batch: int,
    lipschitz: float,
    horizon: int = 64,
) -> AdmissibilityReport:
    """Decide whether a step schedule is admissible under a delay model.

    Step schedules are non-increasing, so the supremum gamma_1 is checked
    against the cap induced by the leading weight. GrowingUniform is rejected
    symbolically: its dominating series has a divergent second moment, so the
    required leading weight grows like the square of the iteration count and
    only steps decaying at least as fast as 1/k^2 could ever comply; none of
    the provided schedule kinds do.
    """
    if isinstance(model, SystemDelay):
        raise AnalysisUnavailableError(
            "System delays admit no dominating series; admissibility analysis is unavailable"
        )
    gamma_sup = step_at(schedule, 1)
    if isinstance(model, GrowingUniformDelay):
        return AdmissibilityReport(
            admissible=False,
            gamma_sup=gamma_sup,
            head=math.inf,
            step_cap=0.0,
            weights=None,
            reason=(
                "uniform-on-{1..k} delays need a leading weight growing like k^2; "
                "no finite weight sequence exists for steps decaying slower than 1/k^2"
            ),
        )
    weights = lyapunov_weights(model, gamma_sup, batch, lipschitz, horizon)
    # verdict uses the conservative head: computed partial plus truncation bound
    cap = step_size_cap(weights.head + weights.truncation_error, batch, lipschitz)
    admissible = gamma_sup <= cap * (1.0 + _CAP_RTOL)
    reason = (
        f"sup gamma = {gamma_sup:.6g} {'<=' if admissible else '>'} cap {cap:.6g} "
        f"(leading weight {weights.head:.6g})"
    )
    return AdmissibilityReport(
        admissible=admissible,
        gamma_sup=gamma_sup,
        head=weights.head,
        step_cap=cap,
        weights=weights,
        reason=reason,
    )
