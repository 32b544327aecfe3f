"""Test problems: smooth objectives with unbiased stochastic gradient oracles.

Each problem works on a flat parameter vector and exposes the same surface:

- ``objective(x)``, ``gradient(x)``: deterministic evaluations.
- ``stochastic_gradient(x, rng)``: one unbiased draw G(x; xi).
- ``gradient_sum(x, count, rng)``: the sum of ``count`` iid draws at the same
  point, sampled in closed form so large batches cost O(1) draws.
- ``lipschitz``, ``noise_variance``: the smoothness constant L and a bound on
  E||G - grad f||^2, exact where available and estimated otherwise.

Problems are immutable after construction; all data (ground truth, samples,
start point) is derived deterministically from the problem seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from . import rng as rngmod

__all__ = [
    "InfeasibleIterateError",
    "Problem",
    "QuadraticProblem",
    "MatrixCompletionProblem",
    "MvnMleProblem",
]


class InfeasibleIterateError(ValueError):
    """The parameter vector decodes to a point outside the feasible set."""


@runtime_checkable
class Problem(Protocol):
    name: str
    dim: int
    lipschitz: float
    noise_variance: float
    optimum_value: float

    def start_point(self) -> np.ndarray: ...

    def objective(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def stochastic_gradient(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    def gradient_sum(self, x: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray: ...

    def feasible(self, x: np.ndarray) -> bool: ...

    def sample_test_point(self, rng: np.random.Generator) -> np.ndarray: ...


def _as_param(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"expected parameter vector of shape ({dim},), got {x.shape}")
    return x


def _estimate_lipschitz(problem, n_pairs: int = 1000, safety: float = 1.5) -> float:
    """Max secant ratio ||grad u - grad v|| / ||u - v|| over random feasible pairs.

    Local estimate around the start region, scaled by a safety factor. Used by
    problems whose gradient is not globally Lipschitz.
    """
    gen = rngmod.stream(problem.seed, rngmod.PROBLEM_PROBE, 1)
    best = 0.0
    for _ in range(n_pairs):
        u = problem.sample_test_point(gen)
        v = problem.sample_test_point(gen)
        gap = float(np.linalg.norm(u - v))
        if gap < 1e-12:
            continue
        ratio = float(np.linalg.norm(problem.gradient(u) - problem.gradient(v))) / gap
        best = max(best, ratio)
    return safety * best


def _estimate_noise_variance(problem, n_draws: int = 1000, safety: float = 1.5) -> float:
    """Empirical E||G - grad f||^2 at the start point, scaled by a safety factor."""
    gen = rngmod.stream(problem.seed, rngmod.PROBLEM_PROBE, 2)
    x = problem.start_point()
    g = problem.gradient(x)
    acc = 0.0
    for _ in range(n_draws):
        acc += float(np.sum((problem.stochastic_gradient(x, gen) - g) ** 2))
    return safety * acc / n_draws


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    """f(x) = x^T H x / 2 with additive Gaussian gradient noise.

    G(x; xi) = H x + noise_std * xi with xi ~ N(0, I), so the constants are
    exact: L = lambda_max(H), E||G - grad f||^2 = dim * noise_std^2, and the
    minimum is 0 at the origin.
    """

    hessian: np.ndarray
    noise_std: float = 0.1
    name: str = "quadratic"
    dim: int = field(init=False)
    lipschitz: float = field(init=False)
    noise_variance: float = field(init=False)
    optimum_value: float = field(init=False, default=0.0)

    def __post_init__(self) -> None:
        h = np.asarray(self.hessian, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("hessian must be a square matrix")
        if not np.allclose(h, h.T, rtol=0.0, atol=1e-12):
            raise ValueError("hessian must be symmetric")
        eigs = np.linalg.eigvalsh(h)
        if eigs[0] <= 0.0:
            raise ValueError("hessian must be positive definite")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be non-negative")
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "dim", h.shape[0])
        object.__setattr__(self, "lipschitz", float(eigs[-1]))
        object.__setattr__(self, "noise_variance", float(self.dim) * self.noise_std**2)

    def start_point(self) -> np.ndarray:
        return np.ones(self.dim)

    def objective(self, x: np.ndarray) -> float:
        x = _as_param(x, self.dim)
        return 0.5 * float(x @ self.hessian @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = _as_param(x, self.dim)
        return self.hessian @ x

    def stochastic_gradient(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.gradient_sum(x, 1, rng)

    def gradient_sum(self, x: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
        # sum of count iid draws: count * Hx + noise_std * sqrt(count) * N(0, I)
        x = _as_param(x, self.dim)
        noise = self.noise_std * np.sqrt(count) * rng.standard_normal(self.dim)
        return count * (self.hessian @ x) + noise

    def feasible(self, x: np.ndarray) -> bool:
        _as_param(x, self.dim)
        return True

    def sample_test_point(self, rng: np.random.Generator) -> np.ndarray:
        return self.start_point() + rng.uniform(-1.0, 1.0, size=self.dim)


@dataclass(frozen=True, eq=False)
class MatrixCompletionProblem:
    """Rank-r factor recovery: f(Y) = ||E[A] - Y Y^T||_F^2 over Y in R^{n x r}.

    The ground-truth factor has iid standard normal entries and
    E[A] = Y* Y*^T. A stochastic gradient observes a fresh noisy matrix
    A = E[A] + noise_std * eps (eps iid standard normal, not symmetrized) and
    returns 4 (Y Y^T - A) Y, which is unbiased for the full gradient
    4 (Y Y^T - E[A]) Y. The objective is quartic, so L and the noise bound are
    local estimates around the start point.
    """

    size: int
    rank: int = 1
    noise_std: float = 1.0
    seed: int = 0
    name: str = "matrix_completion"
    dim: int = field(init=False)
    lipschitz: float = field(init=False)
    noise_variance: float = field(init=False)
    optimum_value: float = field(init=False, default=0.0)
    factor_true: np.ndarray = field(init=False)
    mean_matrix: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if self.size < 1 or self.rank < 1 or self.rank > self.size:
            raise ValueError("need 1 <= rank <= size")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be non-negative")
        gen = rngmod.stream(self.seed, rngmod.PROBLEM_DATA)
        factor = gen.standard_normal((self.size, self.rank))
        object.__setattr__(self, "factor_true", factor)
        object.__setattr__(self, "mean_matrix", factor @ factor.T)
        object.__setattr__(self, "dim", self.size * self.rank)
        object.__setattr__(self, "lipschitz", _estimate_lipschitz(self))
        object.__setattr__(self, "noise_variance", _estimate_noise_variance(self))

    def _factor(self, x: np.ndarray) -> np.ndarray:
        return _as_param(x, self.dim).reshape(self.size, self.rank)

    def start_point(self) -> np.ndarray:
        gen = rngmod.stream(self.seed, rngmod.PROBLEM_START)
        scale = self.size ** (-0.25)  # entries N(0, 1/sqrt(n))
        return (scale * gen.standard_normal((self.size, self.rank))).ravel()

    def objective(self, x: np.ndarray) -> float:
        y = self._factor(x)
        return float(np.sum((self.mean_matrix - y @ y.T) ** 2))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        y = self._factor(x)
        return (4.0 * (y @ y.T - self.mean_matrix) @ y).ravel()

    def stochastic_gradient(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.gradient_sum(x, 1, rng)

    def gradient_sum(self, x: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
        # sum_j 4 (YY^T - A_j) Y = count * grad f(Y) - 4 noise_std sqrt(count) eps Y
        y = self._factor(x)
        eps = rng.standard_normal((self.size, self.size))
        noise = 4.0 * self.noise_std * np.sqrt(count) * (eps @ y)
        return (count * 4.0 * (y @ y.T - self.mean_matrix) @ y - noise).ravel()

    def feasible(self, x: np.ndarray) -> bool:
        _as_param(x, self.dim)
        return True

    def sample_test_point(self, rng: np.random.Generator) -> np.ndarray:
        return self.start_point() + rng.uniform(-0.25, 0.25, size=self.dim)


@dataclass(frozen=True, eq=False)
class MvnMleProblem:
    """Covariance MLE for zero-mean-style Gaussian data.

    Parameter is the full p x p matrix flattened row-major. With
    Sbar = (1/n) sum_i (x_i - mu)(x_i - mu)^T the objective is

        f(M) = ln det M + tr(M^{-1} Sbar),

    defined whenever det M > 0, minimized at M = Sbar with value
    ln det Sbar + p. The stochastic gradient replaces Sbar by the scatter of a
    uniformly chosen sample. Gradients are symmetrized, which is exact at
    symmetric points, so iterates stay symmetric; feasibility means the
    symmetrized matrix admits a Cholesky factorization.
    """

    covariance_true: np.ndarray
    mean: np.ndarray | None = None
    n_samples: int = 1000
    seed: int = 0
    name: str = "mvn_mle"
    dim: int = field(init=False)
    lipschitz: float = field(init=False)
    noise_variance: float = field(init=False)
    optimum_value: float = field(init=False)
    scatter: np.ndarray = field(init=False)
    centered: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        cov = np.asarray(self.covariance_true, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance_true must be a square matrix")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance_true must be symmetric")
        p = cov.shape[0]
        if np.linalg.eigvalsh(cov)[0] <= 0.0:
            raise ValueError("covariance_true must be positive definite")
        mean = np.zeros(p) if self.mean is None else np.asarray(self.mean, dtype=float)
        if mean.shape != (p,):
            raise ValueError(f"mean must have shape ({p},)")
        if self.n_samples < p:
            raise ValueError("need n_samples >= dimension for a nonsingular scatter")
        gen = rngmod.stream(self.seed, rngmod.PROBLEM_DATA)
        samples = gen.multivariate_normal(mean, cov, size=self.n_samples)
        centered = samples - mean
        scatter = centered.T @ centered / self.n_samples
        sign, logdet = np.linalg.slogdet(scatter)
        if sign <= 0.0:
            raise ValueError("sample scatter is singular; increase n_samples")
        object.__setattr__(self, "covariance_true", cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "centered", centered)
        object.__setattr__(self, "scatter", scatter)
        object.__setattr__(self, "dim", p * p)
        object.__setattr__(self, "optimum_value", float(logdet) + float(p))
        object.__setattr__(self, "lipschitz", _estimate_lipschitz(self))
        object.__setattr__(self, "noise_variance", _estimate_noise_variance(self))

    @property
    def side(self) -> int:
        return self.covariance_true.shape[0]

    def _matrix(self, x: np.ndarray) -> np.ndarray:
        return _as_param(x, self.dim).reshape(self.side, self.side)

    def start_point(self) -> np.ndarray:
        return np.eye(self.side).ravel()

    def objective(self, x: np.ndarray) -> float:
        m = self._matrix(x)
        sign, logdet = np.linalg.slogdet(m)
        if sign <= 0.0:
            raise InfeasibleIterateError("decoded matrix has non-positive determinant")
        return float(logdet) + float(np.trace(np.linalg.solve(m, self.scatter)))

    def _gradient_with_scatter(self, x: np.ndarray, scatter: np.ndarray, weight: float) -> np.ndarray:
        m = self._matrix(x)
        try:
            inv_t = np.linalg.inv(m).T
        except np.linalg.LinAlgError as exc:
            raise InfeasibleIterateError("decoded matrix is singular") from exc
        grad = weight * inv_t - inv_t @ scatter @ inv_t
        grad = 0.5 * (grad + grad.T)
        return grad.ravel()

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self._gradient_with_scatter(x, self.scatter, 1.0)

    def stochastic_gradient(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.gradient_sum(x, 1, rng)

    def gradient_sum(self, x: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
        # scatter of `count` uniformly resampled observations via multinomial weights
        weights = rng.multinomial(count, np.full(self.n_samples, 1.0 / self.n_samples))
        scatter = (self.centered * weights[:, None]).T @ self.centered
        return self._gradient_with_scatter(x, scatter, float(count))

    def feasible(self, x: np.ndarray) -> bool:
        m = self._matrix(x)
        sym = 0.5 * (m + m.T)
        try:
            np.linalg.cholesky(sym)
        except np.linalg.LinAlgError:
            return False
        return True

    def sample_test_point(self, rng: np.random.Generator) -> np.ndarray:
        # symmetric perturbation of the identity with spectral radius <= 0.3
        p = self.side
        w = rng.uniform(-1.0, 1.0, size=(p, p))
        w = 0.5 * (w + w.T)
        spectral = float(np.max(np.abs(np.linalg.eigvalsh(w))))
        return (np.eye(p) + 0.3 * w / max(1.0, spectral)).ravel()
