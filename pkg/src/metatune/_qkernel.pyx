# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Q-learning/PER kernel; mirrors ``_qkernel_py`` step for step."""

from libc.math cimport pow, fabs, isfinite

cdef double TD_EPS = 1e-3


cdef inline void _tree_set(double[::1] tree, Py_ssize_t idx, double value) noexcept nogil:
    cdef Py_ssize_t j = tree.shape[0] // 2 + idx
    tree[j] = value
    j //= 2
    while j >= 1:
        tree[j] = tree[2 * j] + tree[2 * j + 1]
        j //= 2


cdef inline Py_ssize_t _tree_find(double[::1] tree, Py_ssize_t size, double u) noexcept nogil:
    cdef Py_ssize_t leaf_base = tree.shape[0] // 2
    cdef double target = u * tree[1]
    cdef double left
    cdef Py_ssize_t j = 1
    while j < leaf_base:
        left = tree[2 * j]
        if target < left:
            j = 2 * j
        else:
            target -= left
            j = 2 * j + 1
    j -= leaf_base
    if j >= size:
        j = size - 1
    return j


def tree_set(double[::1] tree, Py_ssize_t idx, double value):
    _tree_set(tree, idx, value)


def tree_find(double[::1] tree, Py_ssize_t size, double u):
    return _tree_find(tree, size, u)


def sample_indices(double[::1] tree, Py_ssize_t size, const double[::1] uniforms,
                   long long[::1] out):
    cdef Py_ssize_t b
    for b in range(uniforms.shape[0]):
        out[b] = _tree_find(tree, size, uniforms[b])


cdef inline Py_ssize_t _argmax_row(double[:, ::1] q, Py_ssize_t s) noexcept nogil:
    cdef Py_ssize_t a, best = 0
    cdef double bv = q[s, 0]
    for a in range(1, q.shape[1]):
        if q[s, a] > bv:
            bv = q[s, a]
            best = a
    return best


cdef inline double _max_row(double[:, ::1] q, Py_ssize_t s) noexcept nogil:
    cdef Py_ssize_t a
    cdef double bv = q[s, 0]
    for a in range(1, q.shape[1]):
        if q[s, a] > bv:
            bv = q[s, a]
    return bv


def run_episode(double[:, ::1] q,
                const long long[:, ::1] next_state, const long long[:, ::1] alt_next,
                const double[:, ::1] slip, const double[:, ::1] reward,
                const double[:, ::1] alt_reward, const double[:, ::1] noise_std,
                const double[:, ::1] coin_amp, const unsigned char[::1] terminal,
                const long long[::1] starts,
                long long[::1] buf_s, long long[::1] buf_a, double[::1] buf_r,
                long long[::1] buf_s2, unsigned char[::1] buf_d, double[::1] prio,
                double[::1] tree, long long[::1] counters, double[::1] maxp,
                double eps, double lr, double gamma, double per_alpha, double beta,
                long long warmup, Py_ssize_t batch, Py_ssize_t max_steps, bint learn,
                const double[::1] agent_u, Py_ssize_t acur,
                const double[::1] env_u, Py_ssize_t ecur,
                const double[::1] env_n, Py_ssize_t ncur,
                long long[::1] idx_scratch, double[::1] w_scratch):
    cdef Py_ssize_t n_actions = q.shape[1]
    cdef Py_ssize_t capacity = buf_s.shape[0]
    cdef Py_ssize_t leaf_base = tree.shape[0] // 2
    cdef Py_ssize_t k = starts.shape[0]
    cdef Py_ssize_t i0, s, s2, a, cur, size, b, i, si, ai
    cdef double ret = 0.0, r, ue, ua, us, uc, z, amp, total, w, wmax, target, delta, p
    cdef Py_ssize_t steps = 0
    cdef int diverged = 0
    cdef unsigned char d

    with nogil:
        i0 = <Py_ssize_t>(env_u[ecur] * k)
        ecur += 1
        s = starts[i0 if i0 < k else k - 1]
        while steps < max_steps:
            ue = agent_u[acur]
            ua = agent_u[acur + 1]
            acur += 2
            if ue < eps:
                a = <Py_ssize_t>(ua * n_actions)
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
                if uc < 0.5:
                    r += amp
                else:
                    r -= amp
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
                _tree_set(tree, cur, pow(maxp[0], per_alpha))
                counters[0] = (cur + 1) % capacity
                if counters[1] < capacity:
                    counters[1] += 1
                counters[2] += 1
                size = counters[1]
                if counters[2] >= warmup:
                    total = tree[1]
                    wmax = 0.0
                    for b in range(batch):
                        i = _tree_find(tree, size, agent_u[acur + b])
                        idx_scratch[b] = i
                        w = pow(size * (tree[leaf_base + i] / total), -beta)
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
                            target = target + gamma * _max_row(q, buf_s2[i])
                        delta = target - q[si, ai]
                        q[si, ai] += lr * (w_scratch[b] / wmax) * delta
                        if not isfinite(q[si, ai]):
                            diverged = 1
                        p = fabs(delta) + TD_EPS
                        if not isfinite(p):
                            p = maxp[0]
                        prio[i] = p
                        if p > maxp[0]:
                            maxp[0] = p
                        _tree_set(tree, i, pow(p, per_alpha))
                    if diverged:
                        break
            s = s2
            if d:
                break
    return ret, steps, acur, ecur, ncur, diverged
