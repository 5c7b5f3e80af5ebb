"""RLOpt-BC: Bayesian optimization whose acquisition step is refined by
short behavioural-cloning rollouts, plus the shared meta-episode loop.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from metatune.acquisition import candidate_batch, expected_improvement, lhs_unit, top_m_unit
from metatune.agents.runner import EnvConfig, run_meta_episode
from metatune.bc import DemonstrationSet, record_demonstrations, sample_demos
from metatune.gp import GPModel, NumericalError, ObservationDataset, fit
from metatune.metrics import MetricKind, compute_metric  # noqa: F401  (re-exported)
from metatune.rng import SeedTree
from metatune.space import HyperparamSpace

OPTIMIZERS = ("rlopt_bc", "rlopt", "random_search")


class AggregationError(ValueError):
    pass


@dataclass
class MetaEpisodeRecord:
    index: int                      # 1-based meta-episode number
    theta: dict[str, float]         # native units, pinned dims included
    u: np.ndarray                   # normalized search-space coordinates
    y: float
    best_so_far: float
    is_new_max: bool
    train_steps: int
    rollout_steps: int
    wallclock_ms: float
    seed: int
    diverged: bool = False
    acquisition_trace: list[dict] | None = None


@dataclass
class OptimizationResult:
    best_theta: dict[str, float]
    best_y: float
    records: list[MetaEpisodeRecord]
    dataset: ObservationDataset
    psi: DemonstrationSet = field(default_factory=DemonstrationSet)
    psi_history: list[int] = field(default_factory=list)


@dataclass
class AcquisitionResult:
    u: np.ndarray
    theta: np.ndarray
    rollout_steps: int
    trace: list[dict]


@dataclass
class Problem:
    """What a rollout needs to know about the task."""

    agent_kind: str
    env: EnvConfig
    space: HyperparamSpace
    pinned: Mapping[str, float]
    metric: str = MetricKind.BEST_EVAL_SCORE.value

    def full_theta(self, theta) -> dict[str, float]:
        out = self.space.as_dict(theta)
        out.update({k: float(v) for k, v in self.pinned.items()})
        return out


def ei_bc_acquisition(model: GPModel, problem: Problem, f_star: float, psi: DemonstrationSet,
                      m: int, rollout_episodes: int, seeds: SeedTree,
                      demo_subset: int = 3, batch_size: int = 500, sampler: str = "lhs",
                      backend=None) -> AcquisitionResult:
    """Pick the next hyperparameter vector.

    Shortlist the ``m`` best points of a candidate batch by GP expected
    improvement, clone one shared demo subset into a fresh agent per
    candidate, train each for ``rollout_episodes`` episodes, and return
    the candidate whose empirical return mean/std give the highest EI
    against ``f_star``.  Ties keep the shortlist order.  With
    ``rollout_episodes == 0`` (or ``m == 1``) the shortlist head is
    returned without rollouts.
    """
    if rollout_episodes != 0 and rollout_episodes < 2:
        raise ValueError("rollout_episodes must be 0 (skip) or >= 2")
    space = problem.space
    U = candidate_batch(space, batch_size, seeds.generator("batch"), sampler)
    shortlist = top_m_unit(model, space, U, f_star, m)
    trace = [{"rank": r, "batch_index": c.batch_index, "gp_ei": c.ei,
              "gp_mean": c.predicted_mean, "gp_std": c.predicted_std}
             for r, c in enumerate(shortlist)]
    if rollout_episodes == 0 or m == 1:
        return AcquisitionResult(shortlist[0].u, shortlist[0].theta, 0, trace)

    demos = sample_demos(psi, demo_subset, seeds.generator("demos"))
    scores = np.zeros(len(shortlist))
    steps = 0
    for p, cand in enumerate(shortlist):
        try:
            res = run_meta_episode(problem.agent_kind, problem.full_theta(cand.theta), problem.env,
                                   rollout_episodes, problem.metric, seeds.child("rollout", p),
                                   demos=demos, evaluate=False, backend=backend)
            steps += res.train_steps
            r = res.train_returns
            ok = not res.diverged and r.size >= 2 and np.all(np.isfinite(r))
        except ArithmeticError:
            ok, r = False, np.zeros(0)
        if ok:
            mu, sd = float(r.mean()), float(r.std(ddof=1))
            scores[p] = expected_improvement(mu, sd, f_star)
            trace[p].update(rollout_mean=mu, rollout_std=sd, rollout_ei=scores[p])
        else:
            trace[p].update(rollout_mean=None, rollout_std=None, rollout_ei=0.0)
    best = int(np.argmax(scores))
    trace[best]["chosen"] = True
    return AcquisitionResult(shortlist[best].u, shortlist[best].theta, steps, trace)


def rollout_budget(train_episodes: int, fraction: float = 0.025, minimum: int = 3) -> int:
    return max(minimum, int(round(fraction * train_episodes)))


def _fit_or_prior(X, Y, d):
    try:
        return fit(ObservationDataset(np.array(X), np.array(Y)), d)
    except NumericalError:
        return GPModel.prior(d, float(np.mean(Y)))


@dataclass
class LoopContext:
    k: int
    seeds: SeedTree
    X: list
    Y: list
    psi: DemonstrationSet
    best_u: np.ndarray | None
    best_y: float


Proposer = Callable[[LoopContext], tuple]


def meta_loop(config, seed: int, propose: Proposer, use_bc: bool, backend=None) -> OptimizationResult:
    """Shared sequential loop: propose, run, record, refresh demos, refit.

    ``propose`` returns ``(u, rollout_steps, trace)`` for the context of
    the current meta-episode.
    """
    problem = config.problem()
    space = problem.space
    seeds = SeedTree(seed)
    X, Y, records = [], [], []
    psi = DemonstrationSet()
    psi_history = []
    best_y, best_u = -math.inf, None
    for k in range(config.meta_episodes):
        t0 = time.perf_counter()
        ctx = LoopContext(k, seeds, X, Y, psi, best_u, best_y)
        u, rollout_steps, trace = propose(ctx)
        u = np.asarray(u, dtype=float)
        theta_vec = space.denormalize(u)
        theta = problem.full_theta(theta_vec)
        demos = sample_demos(psi, config.demo_subset, seeds.generator("demo_subset", k)) \
            if use_bc else []
        meta_seeds = seeds.child("meta", k)
        try:
            res = run_meta_episode(problem.agent_kind, theta, problem.env, config.train_episodes,
                                   problem.metric, meta_seeds, demos=demos,
                                   n_evals=config.n_evals, eval_episodes=config.eval_episodes,
                                   backend=backend)
            y, agent, steps, diverged = res.y, res.agent, res.train_steps, res.diverged
        except ArithmeticError:
            y, agent, steps, diverged = problem.env.make().min_return, None, 0, True
        is_new = y > best_y
        if is_new:
            best_y, best_u = y, u
            if use_bc and agent is not None:
                psi = record_demonstrations(agent.greedy, problem.env.make(meta_seeds.generator("demo_env")),
                                            config.psi_size, meta_seeds.generator("demo_record"),
                                            source_meta_episode=k + 1, source_score=y)
                psi_history.append(k + 1)
        X.append(u)
        Y.append(y)
        records.append(MetaEpisodeRecord(
            index=k + 1, theta=theta, u=u, y=float(y), best_so_far=float(best_y), is_new_max=is_new,
            train_steps=int(steps), rollout_steps=int(rollout_steps),
            wallclock_ms=(time.perf_counter() - t0) * 1e3, seed=seed, diverged=diverged,
            acquisition_trace=trace))
    best = max(records, key=lambda r: (r.y, -r.index))
    return OptimizationResult(best.theta, best.y, records,
                              ObservationDataset(np.array(X), np.array(Y)), psi, psi_history)


def gp_proposer(config, acquire) -> Proposer:
    """LHS bootstrap for the first ``n_init`` points, then ``acquire``."""
    space = config.search_space()
    boot = {}

    def propose(ctx: LoopContext):
        if ctx.k < config.n_init:
            if not boot:
                boot["u"] = lhs_unit(config.n_init, space.d, ctx.seeds.generator("bootstrap"))
            return boot["u"][ctx.k], 0, None
        model = _fit_or_prior(ctx.X, ctx.Y, space.d)
        return acquire(ctx, model, max(ctx.Y))

    return propose


def optimize(config, seed: int, backend=None) -> OptimizationResult:
    """Run RLOpt-BC for ``config.meta_episodes`` meta-episodes."""
    problem = config.problem()
    e = config.effective_rollout_episodes()

    def acquire(ctx, model, f_star):
        res = ei_bc_acquisition(model, problem, f_star, ctx.psi if config.use_bc else DemonstrationSet(),
                                config.m, e, ctx.seeds.child("acquisition", ctx.k),
                                demo_subset=config.demo_subset, batch_size=config.candidate_batch,
                                sampler=config.candidate_sampler, backend=backend)
        return res.u, res.rollout_steps, res.trace

    return meta_loop(config, seed, gp_proposer(config, acquire), config.use_bc, backend)


def _ci_half(values: np.ndarray) -> float:
    k = values.size
    if k < 2 or np.all(values == values[0]):
        return 0.0
    return float(1.96 * values.std(ddof=1) / math.sqrt(k))


def _ys(execution) -> np.ndarray:
    return np.array([r.y if isinstance(r, MetaEpisodeRecord) else float(r) for r in execution])


def run_comparison(executions: Mapping[str, Sequence]) -> list[dict]:
    """Per-optimizer, per-meta-episode aggregates over executions.

    ``executions`` maps an optimizer name to a list of executions, each a
    sequence of records (or raw scores).  Returns rows with the mean
    best-so-far, its 95% interval, and the mean per-meta-episode score.
    """
    rows = []
    for name, runs in executions.items():
        if not runs:
            raise AggregationError(f"no executions for {name!r}")
        ys = [_ys(run) for run in runs]
        n = len(ys[0])
        if any(len(y) != n for y in ys):
            raise AggregationError(f"executions of {name!r} have different lengths")
        Y = np.vstack(ys)
        best = np.maximum.accumulate(Y, axis=1)
        for j in range(n):
            mb = float(best[:, j].mean())
            h = _ci_half(best[:, j])
            rows.append({"optimizer": name, "meta_episode": j + 1, "mean_best": mb,
                         "ci_low": mb - h, "ci_high": mb + h,
                         "mean_reward": float(Y[:, j].mean()),
                         "reward_ci_half": _ci_half(Y[:, j]), "executions": len(ys)})
    return rows
