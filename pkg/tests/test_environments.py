import pathlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imlab import io
from imlab.environments import ADVANCE, FALL, EnvSpec, build_cliffwalk, build_gridworld, build_random_mdp, make_env
from imlab.expert import optimal_policy
from imlab.mdp import exact_cost, validate_mdp
from imlab.policies import DeterministicPolicy, NonStationaryPolicy, flip_policy

from oracles import brute_cost

FIXTURE = pathlib.Path(__file__).parent / "fixtures" / "random_mdp_seed42.json"


def test_one_cell_grid_is_free():
    mdp = build_gridworld(1, 1, T=4)
    assert exact_cost(mdp, optimal_policy(mdp)) == 0.0


def test_two_cell_grid_hand_computed():
    mdp = build_gridworld(2, 1, goal=(1, 0), slip=0.0, T=3)
    pstar = optimal_policy(mdp)
    assert exact_cost(mdp, pstar) == 1.0
    assert pstar.steps[0].actions[0] == 1  # east


def test_gridworld_slip_probabilities():
    mdp = build_gridworld(3, 3, slip=0.2, T=2)
    s = 1 * 3 + 1  # centre
    row = mdp.transition[s, 0]  # north
    assert row[0 * 3 + 1] == pytest.approx(0.8)
    assert row[1 * 3 + 0] == pytest.approx(0.1)
    assert row[1 * 3 + 2] == pytest.approx(0.1)


def test_gridworld_rejects_bad_goal():
    with pytest.raises(ValueError):
        build_gridworld(3, 3, goal=(3, 0))
    with pytest.raises(ValueError):
        build_gridworld(3, 3, slip=1.0)


@pytest.mark.parametrize("T", [1, 5, 25, 40])
def test_cliff_expert_never_pays(T):
    mdp = build_cliffwalk(25, T=T)
    assert exact_cost(mdp, optimal_policy(mdp)) == 0.0


@pytest.mark.parametrize("T, fall", [(4, 1.0), (7, 0.5)])
def test_falling_at_step_one_costs_every_later_step(T, fall):
    mdp = build_cliffwalk(5, fall_cost=fall, T=T)
    steps = [DeterministicPolicy(np.full(15, FALL), 2)] + [DeterministicPolicy(np.full(15, ADVANCE), 2)] * (T - 1)
    assert exact_cost(mdp, NonStationaryPolicy(tuple(steps))) == pytest.approx((T - 1) * fall)


@pytest.mark.parametrize("rate", [0.02, 0.05, 0.1])
def test_flipped_imitator_cost_matches_enumeration(rate):
    mdp = build_cliffwalk(3, T=5)
    pol = flip_policy(optimal_policy(mdp), rate)
    assert exact_cost(mdp, pol) == pytest.approx(brute_cost(mdp, pol), abs=1e-12)
    assert exact_cost(mdp, pol) > 0


def test_flipped_imitator_first_fall_probability():
    # regret is at least the chance of falling at step 1 times the T-1 remaining steps it cannot all recover
    T, rate = 10, 0.05
    mdp = build_cliffwalk(25, T=T)
    J = exact_cost(mdp, flip_policy(optimal_policy(mdp), rate))
    assert J >= rate * 2  # a fall costs at least two steps before the climb completes
    assert J <= T * (1 - (1 - rate) ** T)


def test_random_mdp_determinism_and_sparsity():
    a = build_random_mdp(6, 3, 0.5, 9, 4)
    b = build_random_mdp(6, 3, 0.5, 9, 4)
    np.testing.assert_array_equal(a.transition, b.transition)
    np.testing.assert_array_equal(a.cost, b.cost)
    assert ((a.transition > 0).sum(axis=2) == 3).all()
    one = build_random_mdp(1, 2, 1.0, 0, 3)
    assert (one.transition == 1.0).all()


def test_pinned_seed_42_fixture_regenerates_bitwise():
    stored = io.load_mdp(FIXTURE)
    fresh = build_random_mdp(3, 2, 1.0, 42, 6)
    np.testing.assert_array_equal(stored.transition, fresh.transition)
    np.testing.assert_array_equal(stored.cost, fresh.cost)
    np.testing.assert_array_equal(stored.initial, fresh.initial)


@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from(["gridworld", "cliffwalk", "random"]),
    st.integers(1, 12),
    st.integers(0, 1000),
    st.floats(0.0, 0.5),
)
def test_every_generated_mdp_validates(family, T, seed, knob):
    params = {
        "gridworld": {"width": 1 + seed % 4, "height": 1 + seed % 3, "slip": knob},
        "cliffwalk": {"length": 2 + seed % 6, "fall_cost": max(knob * 2, 0.01)},
        "random": {"num_states": 1 + seed % 6, "num_actions": 1 + seed % 3, "density": max(knob * 2, 0.2)},
    }[family]
    mdp = make_env(EnvSpec(family, T, params, seed))
    assert validate_mdp(mdp) == []
    assert mdp.horizon == T


def test_make_env_rejects_unknown_things():
    with pytest.raises(ValueError):
        make_env(EnvSpec("maze", 3))
    with pytest.raises(ValueError):
        make_env(EnvSpec("cliffwalk", 3, {"lenght": 4}))
    with pytest.raises(ValueError):
        build_cliffwalk(1)
