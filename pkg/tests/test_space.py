import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metatune.space import (AGENT_HPARAMS, PRESETS, BoundsError, HyperparamDim,
                            HyperparamSpace, preset_space)


def test_linear_endpoints_map_exactly():
    dim = HyperparamDim("gamma", 0.8, 0.9999)
    assert dim.to_unit(0.8) == 0.0
    assert dim.to_unit(0.9999) == 1.0
    assert dim.from_unit(0.0) == 0.8
    assert dim.from_unit(1.0) == 0.9999


def test_log_scale_midpoint_is_geometric_mean():
    dim = HyperparamDim("alpha_lr", 1e-5, 1e-1, "log10")
    assert dim.to_unit(1e-3) == pytest.approx(0.5, abs=1e-12)
    assert dim.from_unit(0.5) == pytest.approx(1e-3, rel=1e-12)


def test_out_of_bounds_names_dimension():
    space = preset_space("tabular_q_per")
    theta = np.array([1e-3, 1.5, 0.5, 0.5, 0.5])
    with pytest.raises(BoundsError) as exc:
        space.normalize(theta)
    assert exc.value.name == "gamma"


@pytest.mark.parametrize("bad", [(0.5, 0.5, "linear"), (0.9, 0.1, "linear"), (0.0, 1.0, "log10"),
                                 (0.1, 1.0, "cubic")])
def test_invalid_dims_rejected(bad):
    with pytest.raises(ValueError):
        HyperparamDim("x", *bad)


def test_duplicate_names_rejected():
    with pytest.raises(ValueError):
        HyperparamSpace([HyperparamDim("a", 0, 1), HyperparamDim("a", 0, 2)])


def test_sample_uniform_requires_positive_n(rng):
    with pytest.raises(ValueError):
        preset_space("tabular_q_per").sample_uniform(0, rng)


def test_sample_uniform_in_bounds(rng):
    space = preset_space("tabular_q_per", "ample")
    for theta in space.sample_uniform(200, rng):
        assert np.all(theta >= space.low) and np.all(theta <= space.high)


def test_presets_cover_agent_names_and_nest():
    for kind, sets in PRESETS.items():
        names = AGENT_HPARAMS[kind]
        spaces = [HyperparamSpace(sets[p]) for p in ("original", "broader", "ample")]
        for s in spaces:
            assert s.names == names
        # each wider range set contains the narrower one
        for narrow, wide in zip(spaces, spaces[1:]):
            assert np.all(wide.low <= narrow.low) and np.all(wide.high >= narrow.high)


def test_dict_round_trip():
    space = preset_space("linear_pg", "broader")
    assert HyperparamSpace.from_list(space.to_list()) == space
    theta = space.denormalize(np.full(space.d, 0.3))
    assert np.array_equal(space.from_dict(space.as_dict(theta)), theta)


def test_subspace_excludes_pinned():
    space = preset_space("tabular_q_per")
    sub = space.subspace(["gamma"])
    assert "gamma" not in sub.names and sub.d == space.d - 1
    with pytest.raises(ValueError):
        space.subspace(["nope"])


unit_vectors = st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5)


@settings(max_examples=200, deadline=None)
@given(u=unit_vectors, preset=st.sampled_from(["original", "broader", "ample"]))
def test_normalize_inverts_denormalize(u, preset):
    space = preset_space("tabular_q_per", preset)
    theta = space.denormalize(u)
    assert np.all(theta >= space.low) and np.all(theta <= space.high)
    np.testing.assert_allclose(space.normalize(theta), u, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(1e-8, 1e-1))
def test_log_dim_round_trip_relative(x):
    dim = HyperparamDim("alpha_lr", 1e-8, 1e-1, "log10")
    assert math.isclose(dim.from_unit(dim.to_unit(x)), x, rel_tol=1e-9)
