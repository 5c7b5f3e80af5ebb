"""Environments, experience records and policy evaluation.

All built-in environments are finite MDPs described by transition tables
(:class:`MDPTables`).  The same tables drive the Python ``step`` API and the
compiled Q-learning kernel.  Each table entry may carry a "slip" to an
alternative outcome, Gaussian reward noise, and a symmetric +/- coin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class EnvError(ValueError):
    pass


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    if not 0.0 <= gamma < 1.0:
        raise EnvError(f"gamma must lie in [0, 1), got {gamma}")
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        return 0.0
    return float(np.dot(r, gamma ** np.arange(r.size)))


@dataclass(frozen=True)
class Transition:
    state: int
    action: int
    reward: float
    next_state: int
    done: bool
    obs: np.ndarray | None = field(default=None, repr=False, compare=False)
    next_obs: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class Trajectory:
    transitions: tuple[Transition, ...]
    episode_return: float

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "Trajectory":
        transitions = tuple(transitions)
        if any(t.done for t in transitions[:-1]):
            raise EnvError("only the final transition of a trajectory may be terminal")
        return cls(transitions, float(sum(t.reward for t in transitions)))

    def __len__(self):
        return len(self.transitions)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.transitions])


@dataclass(frozen=True)
class EvaluationResult:
    episode_returns: np.ndarray
    mean: float
    max: float

    @classmethod
    def from_returns(cls, returns) -> "EvaluationResult":
        r = np.asarray(returns, dtype=float)
        return cls(r, float(r.mean()), float(r.max()))


@dataclass(frozen=True)
class MDPTables:
    next_state: np.ndarray   # (S, A) int64
    reward: np.ndarray       # (S, A)
    terminal: np.ndarray     # (S,) uint8
    starts: np.ndarray       # (k,) int64, uniform start distribution
    alt_next: np.ndarray | None = None
    alt_reward: np.ndarray | None = None
    slip: np.ndarray | None = None
    noise_std: np.ndarray | None = None
    coin_amp: np.ndarray | None = None

    def __post_init__(self):
        ns = np.ascontiguousarray(self.next_state, dtype=np.int64)
        shape = ns.shape
        fill = {
            "alt_next": (ns, np.int64),
            "alt_reward": (self.reward, np.float64),
            "slip": (np.zeros(shape), np.float64),
            "noise_std": (np.zeros(shape), np.float64),
            "coin_amp": (np.zeros(shape), np.float64),
        }
        object.__setattr__(self, "next_state", ns)
        object.__setattr__(self, "reward", np.ascontiguousarray(self.reward, dtype=np.float64))
        for name, (default, dtype) in fill.items():
            value = getattr(self, name)
            value = default if value is None else value
            arr = np.ascontiguousarray(value, dtype=dtype)
            if arr.shape != shape:
                raise EnvError(f"table {name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "terminal", np.ascontiguousarray(self.terminal, dtype=np.uint8))
        object.__setattr__(self, "starts", np.ascontiguousarray(self.starts, dtype=np.int64))
        if self.terminal.shape != (shape[0],):
            raise EnvError("terminal must have one flag per state")

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def n_actions(self) -> int:
        return self.next_state.shape[1]


class TabularEnv:
    """Finite MDP with a seeded RNG stream and a per-episode step cap."""

    def __init__(self, tables: MDPTables, max_steps: int, rng: np.random.Generator | None = None,
                 name: str = "tabular", min_return: float = -1.0,
                 optimal_return: float | None = None,
                 features: Callable[[int, np.random.Generator], np.ndarray] | None = None,
                 feature_dim: int | None = None):
        self.tables = tables
        self.max_steps = int(max_steps)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.min_return = float(min_return)
        self.optimal_return = optimal_return
        self._features = features
        self.feature_dim = feature_dim if features is not None else tables.n_states
        self.steps_taken = 0
        self._state = None
        self._obs = None
        self._t = 0

    n_states = property(lambda self: self.tables.n_states)
    n_actions = property(lambda self: self.tables.n_actions)

    def observe(self, state: int) -> np.ndarray:
        if self._features is None:
            x = np.zeros(self.tables.n_states)
            x[state] = 1.0
            return x
        return self._features(state, self.rng)

    @property
    def obs(self) -> np.ndarray:
        return self._obs

    @property
    def state(self) -> int:
        return self._state

    def reset(self) -> int:
        starts = self.tables.starts
        k = len(starts)
        self._state = int(starts[0] if k == 1 else starts[self.rng.integers(k)])
        self._obs = self.observe(self._state)
        self._t = 0
        return self._state

    @property
    def truncated(self) -> bool:
        return self._t >= self.max_steps

    def step(self, action: int) -> Transition:
        tb = self.tables
        s = self._state
        if s is None or tb.terminal[s]:
            raise EnvError("step called on a finished episode; call reset()")
        if not 0 <= action < tb.n_actions:
            raise EnvError(f"action {action} outside [0, {tb.n_actions})")
        if tb.slip[s, action] > 0 and self.rng.random() < tb.slip[s, action]:
            s2, r = int(tb.alt_next[s, action]), float(tb.alt_reward[s, action])
        else:
            s2, r = int(tb.next_state[s, action]), float(tb.reward[s, action])
        if tb.noise_std[s, action] > 0:
            r += tb.noise_std[s, action] * self.rng.standard_normal()
        amp = tb.coin_amp[s, action]
        if amp != 0:
            r += amp if self.rng.random() < 0.5 else -amp
        obs = self._obs
        self._state = s2
        self._obs = self.observe(s2)
        self._t += 1
        self.steps_taken += 1
        return Transition(s, int(action), r, s2, bool(tb.terminal[s2]), obs, self._obs)


def gridworld_env(width: int = 5, height: int = 5, goal_reward: float = 1.0,
                  step_reward: float = -0.01, rng: np.random.Generator | None = None) -> TabularEnv:
    """Deterministic 4-action grid; start top-left, absorbing goal bottom-right.

    Actions: 0 up, 1 right, 2 down, 3 left.  Entering the goal pays
    ``goal_reward``; every other move (wall bumps included) pays
    ``step_reward``.
    """
    if width < 2 or height < 2:
        raise EnvError("gridworld needs width, height >= 2")
    S = width * height
    goal = S - 1
    moves = [(-1, 0), (0, 1), (1, 0), (0, -1)]
    ns = np.zeros((S, 4), dtype=np.int64)
    rw = np.full((S, 4), float(step_reward))
    for s in range(S):
        r, c = divmod(s, width)
        for a, (dr, dc) in enumerate(moves):
            r2 = min(max(r + dr, 0), height - 1)
            c2 = min(max(c + dc, 0), width - 1)
            s2 = r2 * width + c2
            if s == goal:
                s2 = goal
            ns[s, a] = s2
            if s2 == goal and s != goal:
                rw[s, a] = float(goal_reward)
    terminal = np.zeros(S, dtype=np.uint8)
    terminal[goal] = 1
    cap = 4 * S
    path = width + height - 2
    return TabularEnv(
        MDPTables(ns, rw, terminal, [0]), cap, rng, name=f"gridworld{width}x{height}",
        min_return=min(step_reward, 0.0) * cap + min(goal_reward, 0.0),
        optimal_return=(path - 1) * step_reward + goal_reward,
    )


def deep_sea_env(N: int = 10, stochastic: bool = False,
                 rng: np.random.Generator | None = None) -> TabularEnv:
    """N x N deep-sea exploration grid.

    Actions: 0 down-left (free), 1 down-right (costs 0.01/N).  Landing in
    the bottom-right cell additionally pays +1.  The episode ends on the
    bottom row.  The stochastic variant moves right only with probability
    1 - 1/N and adds N(0, 1) noise to rewards of moves into the bottom row.
    Column moves clamp at the grid edges.
    """
    if N < 2:
        raise EnvError("deep sea needs N >= 2")
    S = N * N
    cost = -0.01 / N
    ns = np.zeros((S, 2), dtype=np.int64)
    rw = np.zeros((S, 2))
    alt_ns = np.zeros((S, 2), dtype=np.int64)
    alt_rw = np.zeros((S, 2))
    slip = np.zeros((S, 2))
    noise = np.zeros((S, 2))
    terminal = np.zeros(S, dtype=np.uint8)
    bottom_right = S - 1
    for s in range(S):
        row, col = divmod(s, N)
        if row == N - 1:
            terminal[s] = 1
            ns[s] = alt_ns[s] = s
            continue
        left = (row + 1) * N + max(col - 1, 0)
        right = (row + 1) * N + min(col + 1, N - 1)
        ns[s, 0] = alt_ns[s, 0] = left
        ns[s, 1] = right
        rw[s, 1] = cost + (1.0 if right == bottom_right else 0.0)
        alt_ns[s, 1] = left
        alt_rw[s, 1] = cost
        if stochastic:
            slip[s, 1] = 1.0 / N
            if row + 1 == N - 1:
                noise[s] = 1.0
    return TabularEnv(
        MDPTables(ns, rw, terminal, [0], alt_next=alt_ns, alt_reward=alt_rw, slip=slip,
                  noise_std=noise),
        N, rng, name=f"deep_sea{N}{'_stochastic' if stochastic else ''}",
        min_return=-0.01 - (5.0 if stochastic else 0.0),
        optimal_return=1.0 - 0.01 * (N - 1) / N,
    )


def umbrella_env(chain_length: int = 1, n_distractors: int = 0,
                 rng: np.random.Generator | None = None) -> TabularEnv:
    """Umbrella credit-assignment chain.

    The episode lasts ``chain_length`` steps.  The first action (1 = take
    the umbrella) fixes the choice; a rainy forecast (bit 1) needs the
    umbrella.  Every step but the last pays a fair +/-1 coin regardless of
    action; the last pays +1 for the right choice and -1 otherwise.

    State ids encode (forecast, choice, remaining steps); observations add
    a bias, the remaining-steps fraction and ``n_distractors`` random bits.
    """
    if chain_length < 1:
        raise EnvError("umbrella needs chain_length >= 1")
    L = chain_length
    NONE = 2

    def sid(f, c, k):
        return (f * 3 + c) * (L + 1) + k

    S = 2 * 3 * (L + 1)
    ns = np.zeros((S, 2), dtype=np.int64)
    rw = np.zeros((S, 2))
    coin = np.zeros((S, 2))
    terminal = np.zeros(S, dtype=np.uint8)
    decode = {}
    for f in (0, 1):
        for c in (0, 1, NONE):
            for k in range(L + 1):
                s = sid(f, c, k)
                decode[s] = (f, c, k)
                if k == 0:
                    terminal[s] = 1
                    ns[s] = s
                    continue
                for a in (0, 1):
                    choice = a if c == NONE else c
                    s2 = sid(f, choice, k - 1)
                    ns[s, a] = s2
                    if k - 1 == 0:
                        rw[s, a] = 1.0 if choice == f else -1.0
                    else:
                        coin[s, a] = 1.0

    def features(state, gen):
        f, c, k = decode[state]
        x = np.empty(6 + n_distractors)
        x[:6] = (1.0, f, 1.0 - f, float(c == 1), float(c == 0), k / L)
        if n_distractors:
            x[6:] = gen.integers(0, 2, n_distractors)
        return x

    starts = [sid(0, NONE, L), sid(1, NONE, L)]
    return TabularEnv(
        MDPTables(ns, rw, terminal, starts, coin_amp=coin), L + 1, rng,
        name=f"umbrella{L}", min_return=-float(L), optimal_return=1.0,
        features=features, feature_dim=6 + n_distractors,
    )


def make_env(kind: str, params: dict | None = None,
             rng: np.random.Generator | None = None) -> TabularEnv:
    params = dict(params or {})
    if kind == "gridworld":
        return gridworld_env(rng=rng, **params)
    if kind == "deep_sea":
        return deep_sea_env(rng=rng, **params)
    if kind == "umbrella":
        return umbrella_env(rng=rng, **params)
    raise EnvError(f"unknown environment kind {kind!r}")


Policy = Callable[[int, np.ndarray], int]


def rollout(env: TabularEnv, policy: Policy) -> Trajectory:
    """One episode under ``policy``, stopping at termination or the step cap."""
    s = env.reset()
    transitions = []
    while True:
        tr = env.step(int(policy(s, env.obs)))
        transitions.append(tr)
        s = tr.next_state
        if tr.done or env.truncated:
            break
    return Trajectory.from_transitions(transitions)


def evaluate_policy(env: TabularEnv, policy: Policy, episodes: int,
                    rng: np.random.Generator | None = None) -> EvaluationResult:
    """Undiscounted returns of ``episodes`` runs of a greedy policy."""
    if episodes < 1:
        raise EnvError("evaluate_policy needs episodes >= 1")
    if rng is not None:
        env.rng = rng
    return EvaluationResult.from_returns([rollout(env, policy).episode_return
                                          for _ in range(episodes)])
