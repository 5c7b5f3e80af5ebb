"""Prioritized experience replay over a sum tree."""

from __future__ import annotations

import numpy as np

from metatune import kernels


class PERError(ValueError):
    pass


def per_probabilities(priorities, per_alpha: float) -> np.ndarray:
    """P(j) = p_j^alpha / sum_i p_i^alpha."""
    p = np.asarray(priorities, dtype=float)
    if p.size == 0 or np.any(p <= 0):
        raise PERError("priorities must be positive")
    w = p ** per_alpha
    return w / w.sum()


def per_is_weight(buffer_size: int, prob, per_beta: float):
    """Importance-sampling weight (N * P(j)) ** -beta, before max-normalization."""
    prob = np.asarray(prob, dtype=float)
    if buffer_size < 1:
        raise PERError("buffer size must be >= 1")
    if np.any(prob <= 0) or np.any(prob > 1):
        raise PERError("probabilities must lie in (0, 1]")
    w = (buffer_size * prob) ** (-per_beta)
    return float(w) if w.ndim == 0 else w


def _pow2_at_least(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


class ReplayBuffer:
    """Fixed-capacity ring buffer of tabular transitions with priorities.

    Storage is plain numpy arrays so the compiled kernel can write into it
    directly.  ``tree`` leaves hold ``priority ** alpha``.
    """

    def __init__(self, capacity: int, per_alpha: float, backend=None):
        if capacity < 1:
            raise PERError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.per_alpha = float(per_alpha)
        self._k = backend or kernels.impl
        self.states = np.zeros(capacity, dtype=np.int64)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros(capacity, dtype=np.int64)
        self.dones = np.zeros(capacity, dtype=np.uint8)
        self.priorities = np.zeros(capacity)
        self.tree = np.zeros(2 * _pow2_at_least(capacity))
        # insertion cursor, current size, total transitions ever added
        self.counters = np.zeros(3, dtype=np.int64)
        self.max_priority = np.ones(1)

    def __len__(self):
        return int(self.counters[1])

    def add(self, state, action, reward, next_state, done):
        cur = int(self.counters[0])
        self.states[cur] = state
        self.actions[cur] = action
        self.rewards[cur] = reward
        self.next_states[cur] = next_state
        self.dones[cur] = done
        self.priorities[cur] = self.max_priority[0]
        self._k.tree_set(self.tree, cur, self.max_priority[0] ** self.per_alpha)
        self.counters[0] = (cur + 1) % self.capacity
        self.counters[1] = min(self.capacity, self.counters[1] + 1)
        self.counters[2] += 1

    def probabilities(self) -> np.ndarray:
        n = len(self)
        leaves = self.tree[self.tree.shape[0] // 2:][:n]
        return leaves / leaves.sum()

    def sample_indices(self, uniforms) -> np.ndarray:
        uniforms = np.ascontiguousarray(uniforms, dtype=float)
        if len(self) == 0:
            raise PERError("cannot sample from an empty buffer")
        out = np.zeros(uniforms.shape[0], dtype=np.int64)
        self._k.sample_indices(self.tree, len(self), uniforms, out)
        return out

    def sample(self, batch: int, beta: float, rng: np.random.Generator):
        """Draw ``batch`` indices proportional to priority**alpha.

        Returns the indices and their IS weights normalized by the batch
        maximum, so every weight lies in (0, 1].
        """
        idx = self.sample_indices(rng.random(batch))
        probs = self.tree[self.tree.shape[0] // 2 + idx] / self.tree[1]
        w = per_is_weight(len(self), probs, beta)
        return idx, w / w.max()

    def update_priorities(self, idx, td_errors, eps: float = 1e-3):
        for i, td in zip(np.asarray(idx), np.asarray(td_errors, dtype=float)):
            p = abs(td) + eps
            self.priorities[i] = p
            if p > self.max_priority[0]:
                self.max_priority[0] = p
            self._k.tree_set(self.tree, int(i), p ** self.per_alpha)
