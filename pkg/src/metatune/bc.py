"""Demonstration store and behavioural-cloning pre-training."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from metatune.agents.policy_gradient import LinearPGAgent, softmax
from metatune.agents.qlearning import QAgent
from metatune.envs import TabularEnv, Trajectory, Transition, rollout

BC_LR = 0.05
BC_MAX_EPOCHS = 50
BC_PATIENCE = 3
BC_VALIDATION_FRACTION = 0.2
TABULAR_MARGIN = 0.1


@dataclass(frozen=True)
class DemonstrationSet:
    trajectories: tuple[Trajectory, ...] = ()
    source_meta_episode: int = -1
    source_score: float = float("nan")

    def __len__(self):
        return len(self.trajectories)


def record_demonstrations(policy, env: TabularEnv, episodes: int,
                          rng: np.random.Generator | None = None,
                          source_meta_episode: int = -1,
                          source_score: float = float("nan")) -> DemonstrationSet:
    """Record ``episodes`` full greedy trajectories of ``policy``."""
    if episodes < 1:
        raise ValueError("record_demonstrations needs episodes >= 1")
    if rng is not None:
        env.rng = rng
    trajs = tuple(rollout(env, policy) for _ in range(episodes))
    return DemonstrationSet(trajs, source_meta_episode, source_score)


def sample_demos(psi: DemonstrationSet, i: int, rng: np.random.Generator) -> list[Trajectory]:
    """Uniform subset of ``min(i, |psi|)`` trajectories, without replacement."""
    if i < 0:
        raise ValueError("subset size must be >= 0")
    n = len(psi)
    k = min(i, n)
    if k == 0:
        return []
    idx = rng.choice(n, size=k, replace=False)
    return [psi.trajectories[j] for j in idx]


def demo_pairs(trajectories) -> list[tuple[int, np.ndarray, int]]:
    return [(t.state, t.obs, t.action) for traj in trajectories for t in traj.transitions]


def bc_loss(action_probs, pairs) -> float:
    """Mean cross-entropy ``-log pi(a|s)`` over (state, [obs,] action) pairs."""
    if not pairs:
        raise ValueError("bc_loss needs at least one pair")
    total = 0.0
    for pair in pairs:
        if len(pair) == 2:
            state, action = pair
            obs = None
        else:
            state, obs, action = pair
        p = float(action_probs(state, obs)[action])
        total += -math.log(p) if p > 0 else math.inf
    return total / len(pairs)


def _cross_entropy(theta, X, a):
    logits = X @ theta
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(a)), a].mean())


def _pretrain_linear(agent: LinearPGAgent, pairs, rng, lr, max_epochs, patience):
    X = np.array([obs for _, obs, _ in pairs], dtype=float)
    a = np.array([act for _, _, act in pairs])
    n = len(a)
    order = rng.permutation(n)
    n_val = int(n * BC_VALIDATION_FRACTION)
    val, train = order[:n_val], order[n_val:]
    theta = agent.params.theta.copy()
    prev = math.inf
    rises = 0
    for _ in range(max_epochs):
        for j in rng.permutation(train):
            p = softmax(X[j] @ theta)
            grad = -p
            grad[a[j]] += 1.0
            theta += lr * np.outer(X[j], grad)
        if n_val:
            loss = _cross_entropy(theta, X[val], a[val])
            rises = rises + 1 if loss > prev else 0
            prev = loss
            if rises >= patience:
                break
    agent.params = type(agent.params)(theta, agent.params.phi.copy())


def _pretrain_tabular(agent: QAgent, pairs, margin):
    q = agent.q
    for s, _, act in pairs:
        others = np.delete(q[s], act)
        if others.size:
            q[s, act] = max(q[s, act], float(others.max()) + margin)


def pretrain(agent, demos, rng: np.random.Generator | None = None, lr: float = BC_LR,
             max_epochs: int = BC_MAX_EPOCHS, patience: int = BC_PATIENCE,
             margin: float = TABULAR_MARGIN):
    """Clone the demonstrated actions into a freshly built agent, in place.

    Tabular agents get a large-margin bump: each demonstrated action is
    lifted to ``margin`` above the best alternative.  Linear agents are fit
    by SGD on the cross-entropy with an 80/20 train/validation split and
    early stopping after ``patience`` consecutive validation-loss rises.
    No environment interaction happens here.
    """
    pairs = demo_pairs(demos)
    if not pairs:
        return agent
    if isinstance(agent, QAgent):
        _pretrain_tabular(agent, pairs, margin)
    elif isinstance(agent, LinearPGAgent):
        _pretrain_linear(agent, pairs, rng if rng is not None else np.random.default_rng(0),
                         lr, max_epochs, patience)
    else:
        raise TypeError(f"cannot pretrain {type(agent).__name__}")
    return agent


def _encode(x):
    return None if x is None else [float(v) for v in x]


def save_demos(psi: DemonstrationSet, path, include_features: bool = False):
    """Write one JSON line per transition."""
    lines = []
    for ep, traj in enumerate(psi.trajectories):
        for step, t in enumerate(traj.transitions):
            row = {"episode": ep, "step": step, "state": int(t.state), "action": int(t.action),
                   "reward": float(t.reward), "next_state": int(t.next_state), "done": bool(t.done)}
            if include_features:
                row["features"] = _encode(t.obs)
                row["next_features"] = _encode(t.next_obs)
            lines.append(json.dumps(row, sort_keys=True))
    text = "\n".join(lines) + ("\n" if lines else "")
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8")
    return text


def load_demos(path, env: TabularEnv | None = None, source_meta_episode: int = -1,
               source_score: float = float("nan")) -> DemonstrationSet:
    """Read a JSONL demo file; one-hot features are rebuilt from ``env``."""
    episodes: dict[int, list[Transition]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        obs = row.get("features")
        nobs = row.get("next_features")
        if obs is None and env is not None:
            obs, nobs = env.observe(row["state"]), env.observe(row["next_state"])
        t = Transition(row["state"], row["action"], row["reward"], row["next_state"], row["done"],
                       None if obs is None else np.asarray(obs, dtype=float),
                       None if nobs is None else np.asarray(nobs, dtype=float))
        episodes.setdefault(row["episode"], []).append(t)
    trajs = tuple(Trajectory.from_transitions(episodes[k]) for k in sorted(episodes))
    return DemonstrationSet(trajs, source_meta_episode, source_score)
