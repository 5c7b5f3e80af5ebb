"""Gaussian-process regression on the unit cube.

Matern-5/2 covariance with per-dimension lengthscales, a constant prior
mean, and kernel hyperparameters picked by maximizing the log marginal
likelihood over a fixed grid.  Outputs are standardized before fitting.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

SQRT5 = math.sqrt(5.0)
LOG_2PI = math.log(2.0 * math.pi)

NOISE_FLOOR = 1e-8
JITTER_START = 1e-10
JITTER_MAX = 1e-4

LENGTHSCALE_GRID = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
SIGNAL_GRID = (0.25, 1.0, 4.0)
NOISE_GRID = (1e-6, 1e-4, 1e-2)


class NumericalError(ArithmeticError):
    pass


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class KernelParams:
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float = NOISE_FLOOR

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if np.any(ls <= 0):
            raise ValueError("lengthscales must be positive")
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        object.__setattr__(self, "noise_variance", max(float(self.noise_variance), NOISE_FLOOR))


@dataclass(frozen=True)
class ObservationDataset:
    points: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.points, dtype=float)
        y = np.asarray(self.outputs, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(len(y), -1) if len(y) else X.reshape(0, 0)
        if X.shape[0] != y.shape[0]:
            raise ValueError("points and outputs differ in length")
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise ValueError("dataset points must lie in the unit cube")
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "outputs", y)

    def __len__(self):
        return self.outputs.shape[0]


def _check_dim(params: KernelParams, *xs):
    d = params.lengthscales.shape[0]
    for x in xs:
        if x.shape[-1] != d:
            raise ValueError(f"expected inputs of dimension {d}, got {x.shape[-1]}")


def matern52(r: np.ndarray, signal_variance: float) -> np.ndarray:
    s5r = SQRT5 * r
    return signal_variance * (1.0 + s5r + 5.0 * r * r / 3.0) * np.exp(-s5r)


def kernel_eval(params: KernelParams, x1, x2) -> float:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    _check_dim(params, x1, x2)
    r = math.sqrt(float(np.sum(((x1 - x2) / params.lengthscales) ** 2)))
    return float(matern52(np.float64(r), params.signal_variance))


def gram(params: KernelParams, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    _check_dim(params, A, B)
    diff = (A[:, None, :] - B[None, :, :]) / params.lengthscales
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    return matern52(r, params.signal_variance)


def _cholesky(K: np.ndarray):
    """Lower factor of ``K``, escalating diagonal jitter on failure."""
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START
    eye = np.eye(K.shape[0])
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("covariance matrix not factorizable with jitter <= 1e-4")


def _factor(X, params):
    K = gram(params, X, X)
    K[np.diag_indices_from(K)] += params.noise_variance
    return _cholesky(K)


def log_marginal_likelihood(dataset: ObservationDataset, params: KernelParams,
                            prior_mean: float | None = None) -> float:
    """GP evidence of ``dataset`` under a constant prior mean.

    ``prior_mean`` defaults to the empirical mean of the outputs.
    """
    n = len(dataset)
    if n == 0:
        raise FitError("log marginal likelihood of an empty dataset")
    m = float(np.mean(dataset.outputs)) if prior_mean is None else float(prior_mean)
    L, _ = _factor(dataset.points, params)
    resid = dataset.outputs - m
    a = solve_triangular(L, resid, lower=True)
    return float(-0.5 * a @ a - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)


@dataclass(frozen=True)
class GPModel:
    """A fitted GP.  Internally works on standardized outputs.

    ``prior_mean`` is in original units; ``kernel`` is in standardized
    units, so the prior variance in original units is
    ``y_scale**2 * kernel.signal_variance``.
    """

    prior_mean: float
    kernel: KernelParams
    dataset: ObservationDataset
    y_scale: float = 1.0
    factor: np.ndarray | None = field(default=None, repr=False)
    alpha: np.ndarray | None = field(default=None, repr=False)
    jitter: float = 0.0

    @classmethod
    def prior(cls, dim: int, prior_mean: float = 0.0, signal_variance: float = 1.0) -> "GPModel":
        """Sentinel model with no data: predicts the prior everywhere."""
        params = KernelParams(np.ones(dim), signal_variance, NOISE_FLOOR)
        empty = ObservationDataset(np.zeros((0, dim)), np.zeros(0))
        return cls(float(prior_mean), params, empty)

    @classmethod
    def from_params(cls, dataset: ObservationDataset, params: KernelParams,
                    prior_mean: float | None = None, y_scale: float = 1.0) -> "GPModel":
        """Condition on ``dataset`` with fixed kernel parameters (no standardization
        unless ``y_scale`` is given explicitly)."""
        if len(dataset) == 0:
            raise FitError("cannot condition on an empty dataset")
        m = float(np.mean(dataset.outputs)) if prior_mean is None else float(prior_mean)
        z = (dataset.outputs - m) / y_scale
        L, jitter = _factor(dataset.points, params)
        alpha = solve_triangular(L.T, solve_triangular(L, z, lower=True), lower=False)
        return cls(m, params, dataset, float(y_scale), L, alpha, jitter)

    @property
    def dim(self) -> int:
        return self.kernel.lengthscales.shape[0]

    @property
    def prior_variance(self) -> float:
        return self.y_scale ** 2 * self.kernel.signal_variance

    def predict_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        _check_dim(self.kernel, X)
        if len(self.dataset) == 0:
            k = X.shape[0]
            return np.full(k, self.prior_mean), np.full(k, self.prior_variance)
        Ks = gram(self.kernel, X, self.dataset.points)
        mean_z = Ks @ self.alpha
        v = solve_triangular(self.factor, Ks.T, lower=True)
        var_z = self.kernel.signal_variance - np.sum(v * v, axis=0)
        mean = self.prior_mean + self.y_scale * mean_z
        var = np.maximum(var_z, 0.0) * self.y_scale ** 2
        return mean, var

    def predict(self, x) -> tuple[float, float]:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("predict takes a single point; use predict_batch")
        mean, var = self.predict_batch(x[None, :])
        return float(mean[0]), float(var[0])


def kernel_grid(dim: int):
    for ls, sv, nv in itertools.product(LENGTHSCALE_GRID, SIGNAL_GRID, NOISE_GRID):
        yield KernelParams(np.full(dim, ls), sv, nv)


def fit(dataset: ObservationDataset, space_dim: int) -> GPModel:
    """Fit a GP by grid search on the log marginal likelihood.

    Deterministic: the first grid entry attaining the maximum wins.
    """
    n = len(dataset)
    if n == 0:
        raise FitError("cannot fit a GP to an empty dataset")
    if dataset.points.shape[1] != space_dim:
        raise ValueError(f"dataset has dimension {dataset.points.shape[1]}, expected {space_dim}")
    mu0 = float(np.mean(dataset.outputs))
    std = float(np.std(dataset.outputs))
    scale = std if std > 1e-12 else 1.0
    standardized = ObservationDataset(dataset.points, (dataset.outputs - mu0) / scale)

    best, best_lml = None, -math.inf
    for params in kernel_grid(space_dim):
        try:
            lml = log_marginal_likelihood(standardized, params, prior_mean=0.0)
        except NumericalError:
            continue
        if lml > best_lml:
            best, best_lml = params, lml
    if best is None:
        raise NumericalError("no grid candidate produced a factorizable covariance")
    return GPModel.from_params(dataset, best, prior_mean=mu0, y_scale=scale)
