"""Meta-episode runner: one hyperparameter vector in, one score out."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from metatune.agents.policy_gradient import DivergenceError, LinearPGAgent, PGAgentConfig
from metatune.agents.qlearning import QAgent, QAgentConfig, RandomPool, linear_schedule
from metatune.envs import TabularEnv, evaluate_policy, make_env
from metatune.metrics import MetricKind, compute_metric
from metatune.rng import SeedTree

AGENT_KINDS = ("tabular_q_per", "linear_pg")
DEFAULT_N_EVALS = 20
DEFAULT_EVAL_EPISODES = 5


@dataclass(frozen=True)
class EnvConfig:
    kind: str
    params: Mapping = field(default_factory=dict)

    def make(self, rng: np.random.Generator | None = None) -> TabularEnv:
        return make_env(self.kind, dict(self.params), rng)


@dataclass
class MetaEpisodeResult:
    y: float | None
    agent: object
    traces: list[np.ndarray]
    eval_points: list[int]
    train_returns: np.ndarray
    train_steps: int
    diverged: bool


def build_agent(agent_kind: str, env: TabularEnv, theta: Mapping[str, float], backend=None):
    if agent_kind == "tabular_q_per":
        return QAgent(env.n_states, env.n_actions, QAgentConfig.from_dict(theta), backend=backend)
    if agent_kind == "linear_pg":
        return LinearPGAgent(env.feature_dim, env.n_actions, PGAgentConfig.from_dict(theta))
    raise ValueError(f"unknown agent kind {agent_kind!r}")


def eval_schedule(budget: int, n_evals: int) -> list[int]:
    """Episode counts after which the greedy policy is evaluated."""
    if budget <= 0:
        return [0]
    n = max(1, min(n_evals, budget))
    return sorted({int(round((j + 1) * budget / n)) for j in range(n)})


def run_meta_episode(agent_kind: str, theta: Mapping[str, float], env_config: EnvConfig,
                     budget: int, metric, seeds: SeedTree, demos=None,
                     n_evals: int = DEFAULT_N_EVALS, eval_episodes: int = DEFAULT_EVAL_EPISODES,
                     evaluate: bool = True, backend=None, bc_options: Mapping | None = None
                     ) -> MetaEpisodeResult:
    """Train a fresh agent for ``budget`` episodes and score it.

    The agent is built from ``theta`` with no prior learning, optionally
    pre-trained on ``demos``, then trained while its greedy policy is
    evaluated at evenly spaced checkpoints.  With ``evaluate=False`` the
    checkpoints are skipped and ``y`` is None; the per-episode training
    returns are still reported.  Non-finite parameters stop training and
    score the environment's minimum return.
    """
    from metatune.bc import pretrain

    env = env_config.make(seeds.generator("env"))
    eval_env = env_config.make(seeds.generator("eval_env"))
    eval_rng = seeds.generator("eval")
    agent = build_agent(agent_kind, env, theta, backend)
    if demos:
        pretrain(agent, demos, seeds.generator("bc"), **dict(bc_options or {}))

    checkpoints = eval_schedule(budget, n_evals) if evaluate else []
    traces, points = [], []
    returns = np.zeros(max(budget, 0))
    steps = 0
    diverged = not agent.is_finite()

    def do_eval(k):
        traces.append(evaluate_policy(eval_env, agent.greedy, eval_episodes, eval_rng).episode_returns)
        points.append(k)

    if checkpoints and checkpoints[0] == 0:
        do_eval(0)
    next_ck = iter(c for c in checkpoints if c > 0)
    ck = next(next_ck, None)

    if agent_kind == "tabular_q_per":
        cfg = agent.config
        pools = (RandomPool(seeds.generator("agent")), RandomPool(seeds.generator("env_pool")),
                 RandomPool(seeds.generator("env_noise"), normal=True))
    else:
        agent_rng = seeds.generator("agent")

    k = 0
    while k < budget and not diverged:
        if agent_kind == "tabular_q_per":
            eps = linear_schedule(cfg.epsilon0, 0.0, k, budget)
            beta = linear_schedule(cfg.per_beta0, 1.0, k, budget)
            ret, n, diverged = agent.train_episode(env, eps, beta, *pools)
        else:
            try:
                ret, n = agent.train_episode(env, agent_rng)
            except DivergenceError:
                ret, n, diverged = math.nan, 0, True
        returns[k] = ret
        steps += n
        k += 1
        if not diverged and ck is not None and k == ck:
            do_eval(k)
            ck = next(next_ck, None)

    y = None
    if diverged or not agent.is_finite():
        diverged = True
        y = env.min_return if evaluate else None
    elif evaluate:
        y = compute_metric(MetricKind(metric), traces)
    return MetaEpisodeResult(y, agent, traces, points, returns[:k], steps, diverged)
