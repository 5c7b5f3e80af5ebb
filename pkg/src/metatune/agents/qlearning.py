"""Tabular Q-learning with epsilon-greedy exploration and prioritized replay."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from metatune import kernels
from metatune.agents.replay import ReplayBuffer
from metatune.envs import TabularEnv

REPLAY_CAPACITY = 10_000
REPLAY_BATCH = 32
REPLAY_WARMUP = 100


def q_update(q: float, reward: float, max_next_q: float, alpha_lr: float, gamma: float) -> float:
    """One Q-learning step; pass ``max_next_q = 0`` for terminal transitions."""
    if not gamma < 1.0:
        raise ValueError("gamma must be < 1")
    return q + alpha_lr * (reward + gamma * max_next_q - q)


def epsilon_greedy(q_row, epsilon: float, rng: np.random.Generator) -> int:
    q_row = np.asarray(q_row, dtype=float)
    if q_row.size == 0:
        raise ValueError("empty Q row")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(q_row.size))
    return int(np.argmax(q_row))


def linear_schedule(start: float, end: float, k: int, total: int) -> float:
    """Value at step ``k`` of ``total``; equals ``end`` exactly at ``k = total - 1``."""
    if total <= 1:
        return end
    if k >= total - 1:
        return end
    return start + (end - start) * (k / (total - 1))


@dataclass(frozen=True)
class QAgentConfig:
    alpha_lr: float
    gamma: float
    epsilon0: float
    per_alpha: float
    per_beta0: float

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise ValueError("epsilon0 must lie in [0, 1]")
        if self.alpha_lr < 0:
            raise ValueError("alpha_lr must be non-negative")

    @classmethod
    def from_dict(cls, values) -> "QAgentConfig":
        return cls(**{f.name: float(values[f.name]) for f in fields(cls)})


class RandomPool:
    """A buffer of pre-drawn variates consumed by the kernel through a cursor."""

    def __init__(self, rng: np.random.Generator, normal: bool = False, chunk: int = 1 << 15):
        self.rng = rng
        self.normal = normal
        self.chunk = chunk
        self.data = np.zeros(0)
        self.pos = 0

    def ensure(self, n: int):
        if self.pos + n > self.data.shape[0]:
            size = max(n, self.chunk)
            self.data = (self.rng.standard_normal(size) if self.normal
                         else self.rng.random(size))
            self.pos = 0


class QAgent:
    kind = "tabular_q_per"

    def __init__(self, n_states: int, n_actions: int, config: QAgentConfig,
                 capacity: int = REPLAY_CAPACITY, batch: int = REPLAY_BATCH,
                 warmup: int = REPLAY_WARMUP, backend=None):
        self.config = config
        self.q = np.zeros((n_states, n_actions))
        self.backend = backend or kernels.impl
        self.buffer = ReplayBuffer(capacity, config.per_alpha, self.backend)
        self.batch = int(batch)
        self.warmup = int(warmup)
        self._idx = np.zeros(self.batch, dtype=np.int64)
        self._w = np.zeros(self.batch)

    def greedy(self, state: int, obs=None) -> int:
        return int(np.argmax(self.q[state]))

    def action_probs(self, state: int, obs=None) -> np.ndarray:
        """Deterministic greedy distribution (used for BC diagnostics)."""
        p = np.zeros(self.q.shape[1])
        p[self.greedy(state)] = 1.0
        return p

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)))

    def train_episode(self, env: TabularEnv, epsilon: float, beta: float,
                      agent_pool: RandomPool, env_pool: RandomPool, normal_pool: RandomPool,
                      learn: bool = True):
        """Run one episode in the kernel.  Returns (return, steps, diverged)."""
        tb = env.tables
        cap = env.max_steps
        agent_pool.ensure(cap * (2 + self.batch))
        env_pool.ensure(1 + 2 * cap)
        normal_pool.ensure(cap)
        buf = self.buffer
        cfg = self.config
        ret, steps, agent_pool.pos, env_pool.pos, normal_pool.pos, diverged = self.backend.run_episode(
            self.q, tb.next_state, tb.alt_next, tb.slip, tb.reward, tb.alt_reward,
            tb.noise_std, tb.coin_amp, tb.terminal, tb.starts,
            buf.states, buf.actions, buf.rewards, buf.next_states, buf.dones, buf.priorities,
            buf.tree, buf.counters, buf.max_priority,
            float(epsilon), cfg.alpha_lr, cfg.gamma, cfg.per_alpha, float(beta),
            self.warmup, self.batch, cap, bool(learn),
            agent_pool.data, agent_pool.pos, env_pool.data, env_pool.pos,
            normal_pool.data, normal_pool.pos, self._idx, self._w,
        )
        return float(ret), int(steps), bool(diverged)
