"""Expected improvement, candidate batches and top-m selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from metatune.gp import GPModel
from metatune.space import HyperparamSpace

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
DEFAULT_BATCH = 500


def norm_cdf(z):
    return 0.5 * erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * z * z)


def expected_improvement_batch(mean, std, f_star: float) -> np.ndarray:
    """Vectorized EI for maximization; ``std == 0`` gives ``max(0, mean - f*)``."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("std must be non-negative")
    gap = mean - f_star
    out = np.maximum(gap, 0.0)
    pos = std > 0
    if np.any(pos):
        s = std[pos]
        with np.errstate(over="ignore"):  # z = +/-inf still gives the right limit
            z = gap[pos] / s
            ei = gap[pos] * norm_cdf(z) + s * norm_pdf(z)
        # cancellation for very negative z can leave tiny negatives
        out[pos] = np.maximum(ei, out[pos])
    return out


def expected_improvement(mean: float, std: float, f_star: float) -> float:
    return float(expected_improvement_batch(np.array([mean]), np.array([std]), f_star)[0])


def lhs_unit(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube in ``[0, 1)^d``: one point per stratum per dimension."""
    if n < 1:
        raise ValueError("lhs needs n >= 1")
    out = np.empty((n, d))
    for j in range(d):
        perm = rng.permutation(n)
        out[:, j] = (perm + rng.random(n)) / n
    return out


def lhs_sample(space: HyperparamSpace, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [space.denormalize(u) for u in lhs_unit(n, space.d, rng)]


def candidate_batch(space: HyperparamSpace, n: int, rng: np.random.Generator,
                    sampler: str = "lhs") -> np.ndarray:
    """Candidate points in the unit cube."""
    if sampler == "lhs":
        return lhs_unit(n, space.d, rng)
    if sampler == "uniform":
        if n < 1:
            raise ValueError("candidate batch needs n >= 1")
        return rng.random((n, space.d))
    raise ValueError(f"unknown candidate sampler {sampler!r}")


@dataclass(frozen=True)
class Candidate:
    theta: np.ndarray
    u: np.ndarray
    ei: float
    predicted_mean: float
    predicted_std: float
    batch_index: int


def top_m_candidates(model: GPModel, space: HyperparamSpace, batch, f_star: float,
                     m: int) -> list[Candidate]:
    """The ``m`` batch points with highest EI, best first.

    ``batch`` holds native-unit vectors.  Ties go to the larger predicted
    std, then to the lower batch index.
    """
    batch = [np.asarray(t, dtype=float) for t in batch]
    if m < 1 or len(batch) < m:
        raise ValueError(f"need 1 <= m <= batch size, got m={m}, batch={len(batch)}")
    U = np.array([space.normalize(t) for t in batch])
    return _top_m_unit(model, space, U, f_star, m, thetas=batch)


def top_m_unit(model: GPModel, space: HyperparamSpace, U: np.ndarray, f_star: float,
               m: int) -> list[Candidate]:
    """Same as :func:`top_m_candidates` for a batch already in the unit cube."""
    if m < 1 or U.shape[0] < m:
        raise ValueError(f"need 1 <= m <= batch size, got m={m}, batch={U.shape[0]}")
    return _top_m_unit(model, space, U, f_star, m)


def _top_m_unit(model, space, U, f_star, m, thetas=None):
    mean, var = model.predict_batch(U)
    std = np.sqrt(var)
    ei = expected_improvement_batch(mean, std, f_star)
    idx = np.arange(U.shape[0])
    order = np.lexsort((idx, -std, -ei))[:m]
    return [Candidate(theta=thetas[i] if thetas is not None else space.denormalize(U[i]),
                      u=U[i].copy(), ei=float(ei[i]), predicted_mean=float(mean[i]),
                      predicted_std=float(std[i]), batch_index=int(i))
            for i in order]
