"""Pure-Python Q-learning/PER kernel.

Reference implementation of the routines in ``_qkernel.pyx``.  Both
consume the same pre-drawn random pools in the same order, so they produce
the same Q-tables for the same inputs.
"""

import math

TD_EPS = 1e-3


def tree_set(tree, idx, value):
    j = tree.shape[0] // 2 + idx
    tree[j] = value
    j //= 2
    while j >= 1:
        tree[j] = tree[2 * j] + tree[2 * j + 1]
        j //= 2


def tree_find(tree, size, u):
    leaf_base = tree.shape[0] // 2
    target = u * tree[1]
    j = 1
    while j < leaf_base:
        left = tree[2 * j]
        if target < left:
            j = 2 * j
        else:
            target -= left
            j = 2 * j + 1
    idx = j - leaf_base
    if idx >= size:
        idx = size - 1
    return idx


def sample_indices(tree, size, uniforms, out):
    for b in range(uniforms.shape[0]):
        out[b] = tree_find(tree, size, uniforms[b])


def _argmax_row(q, s):
    row = q[s]
    best = 0
    bv = row[0]
    for a in range(1, row.shape[0]):
        if row[a] > bv:
            bv = row[a]
            best = a
    return best


def _max_row(q, s):
    row = q[s]
    bv = row[0]
    for a in range(1, row.shape[0]):
        if row[a] > bv:
            bv = row[a]
    return bv


def run_episode(q, next_state, alt_next, slip, reward, alt_reward, noise_std, coin_amp,
                terminal, starts,
                buf_s, buf_a, buf_r, buf_s2, buf_d, prio, tree, counters, maxp,
                eps, lr, gamma, per_alpha, beta, warmup, batch, max_steps, learn,
                agent_u, acur, env_u, ecur, env_n, ncur, idx_scratch, w_scratch):
    """Run one epsilon-greedy episode, replaying a PER batch after every step.

    ``counters`` holds (insertion cursor, buffer size, total steps); ``maxp``
    holds the running maximum raw priority.  Returns
    ``(episode_return, steps, acur, ecur, ncur, diverged)``.
    """
    n_actions = q.shape[1]
    capacity = buf_s.shape[0]
    leaf_base = tree.shape[0] // 2
    k = starts.shape[0]
    i0 = int(env_u[ecur] * k)
    ecur += 1
    s = starts[i0 if i0 < k else k - 1]
    ret = 0.0
    steps = 0
    diverged = 0
    while steps < max_steps:
        ue = agent_u[acur]
        ua = agent_u[acur + 1]
        acur += 2
        if ue < eps:
            a = int(ua * n_actions)
            if a >= n_actions:
                a = n_actions - 1
        else:
            a = _argmax_row(q, s)
        us = env_u[ecur]
        uc = env_u[ecur + 1]
        ecur += 2
        z = env_n[ncur]
        ncur += 1
        if us < slip[s, a]:
            s2 = alt_next[s, a]
            r = alt_reward[s, a]
        else:
            s2 = next_state[s, a]
            r = reward[s, a]
        r += noise_std[s, a] * z
        amp = coin_amp[s, a]
        if amp != 0.0:
            r += amp if uc < 0.5 else -amp
        d = terminal[s2]
        ret += r
        steps += 1
        if learn:
            cur = counters[0]
            buf_s[cur] = s
            buf_a[cur] = a
            buf_r[cur] = r
            buf_s2[cur] = s2
            buf_d[cur] = d
            prio[cur] = maxp[0]
            tree_set(tree, cur, maxp[0] ** per_alpha)
            counters[0] = (cur + 1) % capacity
            if counters[1] < capacity:
                counters[1] += 1
            counters[2] += 1
            size = counters[1]
            if counters[2] >= warmup:
                total = tree[1]
                wmax = 0.0
                for b in range(batch):
                    i = tree_find(tree, size, agent_u[acur + b])
                    idx_scratch[b] = i
                    w = (size * (tree[leaf_base + i] / total)) ** (-beta)
                    w_scratch[b] = w
                    if w > wmax:
                        wmax = w
                acur += batch
                for b in range(batch):
                    i = idx_scratch[b]
                    si = buf_s[i]
                    ai = buf_a[i]
                    target = buf_r[i]
                    if not buf_d[i]:
                        target += gamma * _max_row(q, buf_s2[i])
                    delta = target - q[si, ai]
                    q[si, ai] += lr * (w_scratch[b] / wmax) * delta
                    if not math.isfinite(q[si, ai]):
                        diverged = 1
                    p = abs(delta) + TD_EPS
                    if not math.isfinite(p):
                        p = maxp[0]
                    prio[i] = p
                    if p > maxp[0]:
                        maxp[0] = p
                    tree_set(tree, i, p ** per_alpha)
                if diverged:
                    break
        s = s2
        if d:
            break
    return ret, steps, acur, ecur, ncur, diverged
