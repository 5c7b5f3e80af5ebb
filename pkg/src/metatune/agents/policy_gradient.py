"""Linear-softmax actor-critic trained with GAE advantages.

Policy logits are ``x @ theta`` for a feature vector ``x``; the critic is
``x @ phi``.  Gradients are analytic (see :func:`pg_gradients`), so they
can be checked against finite differences of :func:`pg_objectives`.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from metatune.envs import TabularEnv, Trajectory, rollout


class DivergenceError(ArithmeticError):
    """Training produced non-finite parameters or gradients."""


@dataclass(frozen=True)
class PGAgentConfig:
    alpha_lr: float
    gamma: float
    gae_lambda: float
    entropy_coef: float
    value_coef: float

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")

    @classmethod
    def from_dict(cls, values) -> "PGAgentConfig":
        return cls(**{f.name: float(values[f.name]) for f in fields(cls)})


@dataclass
class LinearParams:
    theta: np.ndarray  # (features, actions)
    phi: np.ndarray    # (features,)

    def copy(self) -> "LinearParams":
        return LinearParams(self.theta.copy(), self.phi.copy())


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gae_advantages(rewards, values, next_values, dones, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimates by backward recursion.

    A terminal flag zeroes both the bootstrap value and the carried
    accumulator, so concatenated episodes do not leak into each other.
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    nv = np.asarray(next_values, dtype=float)
    d = np.asarray(dones, dtype=float)
    if not (r.shape == v.shape == nv.shape == d.shape):
        raise ValueError("rewards, values, next_values and dones must have equal length")
    if not gamma < 1.0:
        raise ValueError("gamma must be < 1")
    adv = np.zeros_like(r)
    acc = 0.0
    for t in range(r.shape[0] - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + gamma * nv[t] * live - v[t]
        acc = delta + gamma * lam * live * acc
        adv[t] = acc
    return adv


def rewards_to_go(rewards, gamma: float) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    out = np.zeros_like(r)
    acc = 0.0
    for t in range(r.shape[0] - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def _arrays(traj: Trajectory):
    X = np.array([t.obs for t in traj.transitions])
    Xn = np.array([t.next_obs for t in traj.transitions])
    a = np.array([t.action for t in traj.transitions])
    r = traj.rewards
    d = np.array([t.done for t in traj.transitions], dtype=float)
    return X, Xn, a, r, d


def _advantages(params, X, Xn, r, d, config):
    return gae_advantages(r, X @ params.phi, Xn @ params.phi, d, config.gamma, config.gae_lambda)


def pg_objectives(params: LinearParams, trajectories, config: PGAgentConfig,
                  advantages=None) -> tuple[float, float]:
    """(policy surrogate to maximize, value loss to minimize).

    The surrogate is the per-trajectory mean of
    ``sum_t log pi(a_t|s_t) A_t + entropy_coef * H(pi(.|s_t))`` with the
    advantages held fixed; the value loss is the mean squared error of the
    critic against discounted returns over all timesteps.
    """
    J = 0.0
    sq = 0.0
    count = 0
    for k, traj in enumerate(trajectories):
        X, Xn, a, r, d = _arrays(traj)
        A = _advantages(params, X, Xn, r, d, config) if advantages is None else advantages[k]
        logits = X @ params.theta
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        p = np.exp(logp)
        H = -(p * logp).sum(axis=1)
        J += float(np.sum(logp[np.arange(len(a)), a] * A) + config.entropy_coef * H.sum())
        R = rewards_to_go(r, config.gamma)
        sq += float(np.sum((X @ params.phi - R) ** 2))
        count += len(a)
    return J / len(trajectories), sq / count


def pg_gradients(params: LinearParams, trajectories, config: PGAgentConfig):
    """Analytic gradients of :func:`pg_objectives` w.r.t. theta and phi."""
    g_theta = np.zeros_like(params.theta)
    g_phi = np.zeros_like(params.phi)
    count = 0
    for traj in trajectories:
        X, Xn, a, r, d = _arrays(traj)
        A = _advantages(params, X, Xn, r, d, config)
        logits = X @ params.theta
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        p = np.exp(logp)
        H = -(p * logp).sum(axis=1)
        onehot = np.zeros_like(p)
        onehot[np.arange(len(a)), a] = 1.0
        dlogits = (onehot - p) * A[:, None] - config.entropy_coef * p * (logp + H[:, None])
        g_theta += X.T @ dlogits
        R = rewards_to_go(r, config.gamma)
        g_phi += 2.0 * X.T @ (X @ params.phi - R)
        count += len(a)
    return g_theta / len(trajectories), g_phi / count


def pg_update(params: LinearParams, trajectories, config: PGAgentConfig) -> LinearParams:
    """Gradient ascent on the policy surrogate, descent on the value loss."""
    if not trajectories:
        raise ValueError("pg_update needs at least one trajectory")
    g_theta, g_phi = pg_gradients(params, trajectories, config)
    if not (np.all(np.isfinite(g_theta)) and np.all(np.isfinite(g_phi))):
        raise DivergenceError("non-finite policy-gradient step")
    return LinearParams(params.theta + config.alpha_lr * g_theta,
                        params.phi - config.alpha_lr * config.value_coef * g_phi)


class LinearPGAgent:
    kind = "linear_pg"

    def __init__(self, n_features: int, n_actions: int, config: PGAgentConfig):
        self.config = config
        self.params = LinearParams(np.zeros((n_features, n_actions)), np.zeros(n_features))

    @property
    def n_actions(self) -> int:
        return self.params.theta.shape[1]

    def probs(self, obs) -> np.ndarray:
        return softmax(np.asarray(obs, dtype=float) @ self.params.theta)

    def action_probs(self, state, obs) -> np.ndarray:
        return self.probs(obs)

    def greedy(self, state, obs) -> int:
        return int(np.argmax(obs @ self.params.theta))

    def sampler(self, rng: np.random.Generator):
        def act(state, obs):
            p = self.probs(obs)
            return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"),
                           p.size - 1))
        return act

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.params.theta)) and np.all(np.isfinite(self.params.phi)))

    def train_episode(self, env: TabularEnv, rng: np.random.Generator) -> tuple[float, int]:
        traj = rollout(env, self.sampler(rng))
        self.params = pg_update(self.params, [traj], self.config)
        if not self.is_finite():
            raise DivergenceError("non-finite policy parameters")
        return traj.episode_return, len(traj)
