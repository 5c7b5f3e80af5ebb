"""Comparison optimizers: hypersphere random search and plain GP-EI BO."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from metatune.acquisition import DEFAULT_BATCH, candidate_batch, top_m_unit
from metatune.gp import GPModel
from metatune.optimizer import LoopContext, OptimizationResult, gp_proposer, meta_loop
from metatune.space import HyperparamSpace

DEFAULT_RADIUS = 0.2
MAX_REJECTION_TRIES = 1000


@dataclass
class RandomSearchState:
    center: np.ndarray | None = None   # normalized best point so far
    radius: float = DEFAULT_RADIUS
    best_y: float = -np.inf

    def __post_init__(self):
        if not 0.0 < self.radius <= 1.0:
            raise ValueError("radius must lie in (0, 1]")
        if self.center is not None:
            self.center = np.asarray(self.center, dtype=float)
            if np.any(self.center < 0) or np.any(self.center > 1):
                raise ValueError("center must lie in the unit cube")

    def observe(self, u, y: float):
        if y > self.best_y:
            self.best_y = float(y)
            self.center = np.asarray(u, dtype=float).copy()


def ball_offset(d: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform point of the L2 ball by rejection from its bounding cube.

    Falls back to a Gaussian offset (std ``radius / 2``) if 1000 draws
    all miss, which only happens in high dimension.
    """
    for _ in range(MAX_REJECTION_TRIES):
        z = rng.uniform(-radius, radius, size=d)
        if z @ z <= radius * radius:
            return z
    return rng.normal(0.0, radius / 2, size=d)


def random_search_unit(state: RandomSearchState, d: int, rng: np.random.Generator) -> np.ndarray:
    if state.center is None:
        return rng.random(d)
    return np.clip(state.center + ball_offset(d, state.radius, rng), 0.0, 1.0)


def random_search_step(state: RandomSearchState, space: HyperparamSpace,
                       rng: np.random.Generator) -> np.ndarray:
    """Next native-unit vector: uniform in the cube until a best exists,
    then uniform in the ball around it, clipped to the cube."""
    return space.denormalize(random_search_unit(state, space.d, rng))


def plain_bo_step(model: GPModel, space: HyperparamSpace, f_star: float,
                  rng: np.random.Generator, batch_size: int = DEFAULT_BATCH,
                  sampler: str = "lhs") -> np.ndarray:
    """Argmax of standard EI over a fresh candidate batch."""
    return _plain_bo_candidate(model, space, f_star, rng, batch_size, sampler).theta


def _plain_bo_candidate(model, space, f_star, rng, batch_size, sampler):
    U = candidate_batch(space, batch_size, rng, sampler)
    return top_m_unit(model, space, U, f_star, 1)[0]


def run_baseline(kind: str, config, seed: int, backend=None) -> OptimizationResult:
    """Run a comparison optimizer on the same loop, budget and metric as
    RLOpt-BC, without behavioural cloning or demonstration bookkeeping."""
    space = config.search_space()
    if kind in ("plain_bo", "rlopt"):
        def acquire(ctx: LoopContext, model, f_star):
            rng = ctx.seeds.child("acquisition", ctx.k).generator("batch")
            cand = _plain_bo_candidate(model, space, f_star, rng, config.candidate_batch,
                                       config.candidate_sampler)
            return cand.u, 0, None
        return meta_loop(config, seed, gp_proposer(config, acquire), False, backend)
    if kind == "random_search":
        state = RandomSearchState(radius=config.random_search_radius)

        def propose(ctx: LoopContext):
            if ctx.k > 0:
                state.observe(ctx.X[-1], ctx.Y[-1])
            return random_search_unit(state, space.d, ctx.seeds.generator("random_search", ctx.k)), 0, None
        return meta_loop(config, seed, propose, False, backend)
    raise ValueError(f"unknown baseline {kind!r}")
