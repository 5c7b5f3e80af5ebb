import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metatune.acquisition import candidate_batch, top_m_unit
from metatune.baselines import (RandomSearchState, ball_offset, plain_bo_step, random_search_step,
                                random_search_unit, run_baseline)
from metatune.gp import GPModel, ObservationDataset, fit
from metatune.optimizer import optimize
from metatune.space import preset_space


def test_cold_start_uniform(rng):
    space = preset_space("tabular_q_per")
    theta = random_search_step(RandomSearchState(), space, rng)
    assert np.all(theta >= space.low) and np.all(theta <= space.high)


def test_distance_audit(rng):
    offsets = np.array([ball_offset(2, 0.2, rng) for _ in range(10_000)])
    assert np.max(np.linalg.norm(offsets, axis=1)) <= 0.2 + 1e-12


def test_ball_samples_fill_the_disc(rng):
    offsets = np.array([ball_offset(2, 0.2, rng) for _ in range(20_000)])
    r = np.linalg.norm(offsets, axis=1)
    # uniform in a disc: P(r < 0.1) = 1/4
    assert np.mean(r < 0.1) == pytest.approx(0.25, abs=0.015)


@settings(max_examples=100, deadline=None)
@given(corner=st.lists(st.sampled_from([0.0, 1.0]), min_size=5, max_size=5), seed=st.integers(0, 999))
def test_corner_center_stays_in_bounds(corner, seed):
    space = preset_space("tabular_q_per")
    state = RandomSearchState(np.array(corner), 0.2, 0.0)
    theta = random_search_step(state, space, np.random.default_rng(seed))
    assert np.all(theta >= space.low) and np.all(theta <= space.high)


def test_high_dimension_falls_back_to_gaussian(rng):
    z = ball_offset(60, 0.2, rng)
    assert z.shape == (60,) and np.all(np.isfinite(z))


def test_state_validation_and_update():
    with pytest.raises(ValueError):
        RandomSearchState(radius=0.0)
    with pytest.raises(ValueError):
        RandomSearchState(center=np.array([1.5]))
    s = RandomSearchState()
    s.observe([0.2, 0.3], 1.0)
    s.observe([0.9, 0.9], 0.5)
    np.testing.assert_array_equal(s.center, [0.2, 0.3])


def test_plain_bo_step_equals_top_candidate(rng):
    space = preset_space("tabular_q_per")
    model = fit(ObservationDataset(rng.random((5, 5)), rng.normal(size=5)), 5)
    theta = plain_bo_step(model, space, 0.3, np.random.default_rng(4))
    U = candidate_batch(space, 500, np.random.default_rng(4))
    np.testing.assert_array_equal(theta, top_m_unit(model, space, U, 0.3, 1)[0].theta)


def test_plain_bo_prior_model_takes_first_point():
    space = preset_space("tabular_q_per")
    theta = plain_bo_step(GPModel.prior(5), space, 0.0, np.random.default_rng(2), batch_size=20)
    U = candidate_batch(space, 20, np.random.default_rng(2))
    np.testing.assert_array_equal(theta, space.denormalize(U[0]))


def test_plain_bo_batch_of_one(rng):
    space = preset_space("tabular_q_per")
    theta = plain_bo_step(GPModel.prior(5), space, 0.0, np.random.default_rng(1), batch_size=1)
    np.testing.assert_array_equal(theta, space.denormalize(candidate_batch(space, 1, np.random.default_rng(1))[0]))


@pytest.mark.parametrize("kind", ["random_search", "plain_bo"])
def test_baseline_records(kind, small_config):
    res = run_baseline(kind, small_config, 0)
    assert len(res.records) == small_config.meta_episodes
    best = [r.best_so_far for r in res.records]
    assert best == sorted(best)
    assert len(res.psi) == 0 and all(r.rollout_steps == 0 for r in res.records)
    one = run_baseline(kind, small_config.replace(meta_episodes=1), 0)
    assert len(one.records) == 1


def test_degenerate_optimizer_matches_plain_bo(small_config):
    cfg = small_config.replace(use_bc=False, m=1, rollout_episodes=0, meta_episodes=5)
    a = optimize(cfg, 2)
    b = run_baseline("plain_bo", cfg, 2)
    assert [r.theta for r in a.records] == [r.theta for r in b.records]
    assert [r.y for r in a.records] == [r.y for r in b.records]


def test_unknown_baseline(small_config):
    with pytest.raises(ValueError):
        run_baseline("tpe", small_config, 0)


def test_random_search_moves_around_best(small_config):
    res = run_baseline("random_search", small_config.replace(meta_episodes=4), 0)
    us = [r.u for r in res.records]
    best_u = us[0]
    best_y = res.records[0].y
    for r in res.records[1:]:
        assert np.linalg.norm(np.clip(r.u, 0, 1) - best_u) <= 0.2 + 1e-9
        if r.y > best_y:
            best_u, best_y = r.u, r.y


def test_random_search_unit_is_clipped():
    state = RandomSearchState(np.zeros(3), 0.5, 0.0)
    u = random_search_unit(state, 3, np.random.default_rng(0))
    assert np.all((0 <= u) & (u <= 1))
