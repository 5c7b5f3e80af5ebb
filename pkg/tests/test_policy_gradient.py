import numpy as np
import pytest

from metatune.agents.policy_gradient import (DivergenceError, LinearParams, LinearPGAgent,
                                             PGAgentConfig, gae_advantages, pg_gradients,
                                             pg_objectives, pg_update, rewards_to_go, softmax)
from metatune.envs import MDPTables, TabularEnv, Trajectory, Transition


def gae_oracle(r, v, nv, d, gamma, lam):
    """O(T^2) double sum, truncated at the first terminal flag."""
    T = len(r)
    delta = [r[t] + gamma * nv[t] * (1 - d[t]) - v[t] for t in range(T)]
    out = np.zeros(T)
    for t in range(T):
        acc, w = 0.0, 1.0
        for k in range(t, T):
            acc += w * delta[k]
            if d[k]:
                break
            w *= gamma * lam
        out[t] = acc
    return out


@pytest.mark.parametrize("seed", range(10))
def test_gae_matches_double_sum(seed):
    rng = np.random.default_rng(seed)
    T = 12
    r, v, nv = rng.normal(size=T), rng.normal(size=T), rng.normal(size=T)
    d = (rng.random(T) < 0.2).astype(float)
    g, lam = rng.uniform(0, 0.99), rng.uniform(0, 1)
    np.testing.assert_allclose(gae_advantages(r, v, nv, d, g, lam), gae_oracle(r, v, nv, d, g, lam),
                               atol=1e-10)


def test_gae_lambda_zero_is_td_error(rng):
    r, v, nv = rng.normal(size=6), rng.normal(size=6), rng.normal(size=6)
    d = np.zeros(6)
    np.testing.assert_allclose(gae_advantages(r, v, nv, d, 0.9, 0.0), r + 0.9 * nv - v, atol=1e-14)


def test_gae_lambda_one_zero_values_is_return(rng):
    r = rng.normal(size=8)
    d = np.zeros(8)
    d[-1] = 1
    z = np.zeros(8)
    np.testing.assert_allclose(gae_advantages(r, z, z, d, 0.8, 1.0), rewards_to_go(r, 0.8), atol=1e-12)


def test_gae_length_mismatch():
    with pytest.raises(ValueError):
        gae_advantages([1, 2], [0], [0, 0], [0, 0], 0.9, 0.9)


def _random_trajs(rng, n_feat, n_act, n_traj):
    trajs = []
    for _ in range(n_traj):
        T = int(rng.integers(1, 6))
        ts = []
        for t in range(T):
            x, xn = rng.normal(size=n_feat), rng.normal(size=n_feat)
            ts.append(Transition(t, int(rng.integers(n_act)), float(rng.normal()), t + 1,
                                 t == T - 1, x, xn))
        trajs.append(Trajectory.from_transitions(ts))
    return trajs


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n_feat, n_act = int(rng.integers(2, 5)), int(rng.integers(2, 4))
    cfg = PGAgentConfig(0.1, float(rng.uniform(0.5, 0.99)), float(rng.uniform(0, 1)),
                        float(rng.uniform(0, 0.2)), float(rng.uniform(0.1, 1)))
    params = LinearParams(rng.normal(size=(n_feat, n_act)), rng.normal(size=n_feat))
    trajs = _random_trajs(rng, n_feat, n_act, int(rng.integers(1, 4)))
    g_theta, g_phi = pg_gradients(params, trajs, cfg)
    # advantages are treated as constants in the surrogate
    from metatune.agents.policy_gradient import _advantages, _arrays
    adv = []
    for t in trajs:
        X, Xn, _, r, d = _arrays(t)
        adv.append(_advantages(params, X, Xn, r, d, cfg))
    h = 1e-5
    num = np.zeros_like(params.theta)
    for idx in np.ndindex(params.theta.shape):
        up, dn = params.theta.copy(), params.theta.copy()
        up[idx] += h
        dn[idx] -= h
        num[idx] = (pg_objectives(LinearParams(up, params.phi), trajs, cfg, adv)[0]
                    - pg_objectives(LinearParams(dn, params.phi), trajs, cfg, adv)[0]) / (2 * h)
    assert np.max(np.abs(num - g_theta)) < 1e-4
    num_phi = np.zeros_like(params.phi)
    for i in range(n_feat):
        up, dn = params.phi.copy(), params.phi.copy()
        up[i] += h
        dn[i] -= h
        num_phi[i] = (pg_objectives(LinearParams(params.theta, up), trajs, cfg, adv)[1]
                      - pg_objectives(LinearParams(params.theta, dn), trajs, cfg, adv)[1]) / (2 * h)
    assert np.max(np.abs(num_phi - g_phi)) < 1e-4


def test_zero_advantage_zero_entropy_leaves_theta(rng):
    cfg = PGAgentConfig(0.5, 0.9, 0.9, 0.0, 0.5)
    # a single one-step episode with reward equal to the critic's value
    x = np.array([1.0, 0.0])
    params = LinearParams(rng.normal(size=(2, 2)), np.array([0.7, 0.0]))
    traj = Trajectory.from_transitions([Transition(0, 1, 0.7, 1, True, x, np.zeros(2))])
    new = pg_update(params, [traj], cfg)
    np.testing.assert_allclose(new.theta, params.theta)


def test_pg_update_needs_trajectories():
    with pytest.raises(ValueError):
        pg_update(LinearParams(np.zeros((2, 2)), np.zeros(2)), [], PGAgentConfig(0.1, 0.9, 0.9, 0, 0.5))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_raises(rng):
    cfg = PGAgentConfig(0.1, 0.9, 0.9, 0.0, 0.5)
    x = np.array([np.inf, 1.0])
    traj = Trajectory.from_transitions([Transition(0, 0, 1.0, 1, True, x, np.zeros(2))])
    with pytest.raises(DivergenceError):
        pg_update(LinearParams(np.zeros((2, 2)), np.zeros(2)), [traj], cfg)


def bandit_env(rng):
    tables = MDPTables(np.array([[1, 1], [1, 1]]), np.array([[1.0, 0.0], [0.0, 0.0]]),
                       np.array([0, 1]), [0])
    return TabularEnv(tables, 1, rng, name="bandit", min_return=0.0, optimal_return=1.0)


def test_two_armed_bandit_converges():
    agent = LinearPGAgent(2, 2, PGAgentConfig(0.5, 0.9, 0.95, 0.0, 0.5))
    env, rng = bandit_env(np.random.default_rng(0)), np.random.default_rng(1)
    for _ in range(500):
        agent.train_episode(env, rng)
    assert agent.probs(np.array([1.0, 0.0]))[0] > 0.95


def test_softmax_stable():
    p = softmax(np.array([1000.0, 0.0, -1000.0]))
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0)


def test_config_rejects_gamma_one():
    with pytest.raises(ValueError):
        PGAgentConfig(0.1, 1.0, 0.9, 0.0, 0.5)
