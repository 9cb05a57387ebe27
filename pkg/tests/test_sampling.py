import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imlab.mdp import exact_cost
from imlab.policies import DeterministicPolicy, MixturePolicy, NonStationaryPolicy, StochasticPolicy
from imlab.sampling import monte_carlo_cost, rollout, rollout_batch, uniform_block

from conftest import policies_for, small_mdps
from oracles import random_mdp, random_stochastic_table


@settings(max_examples=25)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=8, unique=True), st.integers(1, 13))
def test_stream_rows_do_not_depend_on_grouping(js, width):
    keys = [(7, 3, j) for j in js]
    together = uniform_block(keys, width)
    alone = np.vstack([uniform_block([k], width) for k in keys])
    np.testing.assert_array_equal(together, alone)
    assert ((together >= 0) & (together < 1)).all()


def test_distinct_keys_give_distinct_streams():
    a = uniform_block([(1, 0), (1, 1), (2, 0)], 8)
    assert not np.array_equal(a[0], a[1])
    assert not np.array_equal(a[0], a[2])


def test_rollout_reproducible(rng):
    mdp = random_mdp(rng, 4, 3, 6)
    pol = StochasticPolicy(random_stochastic_table(rng, 4, 3))
    t1, t2 = rollout(mdp, pol, 99), rollout(mdp, pol, 99)
    assert t1.states == t2.states and t1.actions == t2.actions
    assert t1.total_cost == pytest.approx(sum(t1.costs))
    assert len(t1.states) == 6


def test_trajectory_mixture_keeps_one_component_per_episode():
    P = np.zeros((1, 2, 1))
    P[0, :, 0] = 1.0
    from imlab.mdp import TabularMdp

    mdp = TabularMdp(P, np.array([[0.0, 1.0]]), np.array([1.0]), 5)
    mix = MixturePolicy((DeterministicPolicy(np.array([0]), 2), DeterministicPolicy(np.array([1]), 2)), np.array([0.5, 0.5]))
    batch = rollout_batch(mdp, mix, [(3, j) for j in range(200)])
    assert set(np.unique(batch.total_costs)) <= {0.0, 5.0}
    per_step = MixturePolicy(mix.components, mix.weights, per_step=True)
    batch = rollout_batch(mdp, per_step, [(3, j) for j in range(200)])
    assert len(np.unique(batch.total_costs)) > 2


def _mc_cases():
    rng = np.random.default_rng(2024)
    cases = []
    for i in range(30):
        S, A, T = int(rng.integers(2, 7)), int(rng.integers(2, 4)), int(rng.integers(2, 9))
        mdp = random_mdp(rng, S, A, T)
        kind = i % 3
        if kind == 0:
            pol = StochasticPolicy(random_stochastic_table(rng, S, A))
        elif kind == 1:
            pol = NonStationaryPolicy(tuple(DeterministicPolicy(rng.integers(0, A, S), A) for _ in range(T)))
        else:
            comps = (DeterministicPolicy(rng.integers(0, A, S), A), StochasticPolicy(random_stochastic_table(rng, S, A)))
            pol = MixturePolicy(comps, np.array([0.3, 0.7]))
        cases.append((mdp, pol, i))
    return cases


def test_monte_carlo_within_three_standard_errors_on_30_cases():
    misses = []
    for mdp, pol, seed in _mc_cases():
        mean, se = monte_carlo_cost(mdp, pol, 4000, seed)
        exact = exact_cost(mdp, pol)
        if abs(mean - exact) > 3 * se:
            misses.append((seed, mean, exact, se))
    assert misses == []


@settings(max_examples=20, deadline=None)
@given(st.data())
def test_deterministic_world_rollout_cost_is_exact(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
    mdp = random_mdp(rng, 3, 2, 4, deterministic=True)
    mdp = type(mdp)(mdp.transition, mdp.cost, np.eye(3)[0], mdp.horizon)
    pol = DeterministicPolicy(rng.integers(0, 2, 3), 2)
    mean, se = monte_carlo_cost(mdp, pol, 5, 1)
    assert se < 1e-12
    assert mean == pytest.approx(exact_cost(mdp, pol), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.data())
def test_sampled_actions_have_positive_probability(data):
    mdp = data.draw(small_mdps())
    pol = data.draw(policies_for(mdp))
    batch = rollout_batch(mdp, pol, [(5, j) for j in range(50)])
    comps = pol.components if isinstance(pol, MixturePolicy) else (pol,)
    for k in range(mdp.horizon):
        s, a = batch.states[:, k], batch.actions[:, k]
        possible = sum(c.probs(k + 1) for c in comps)[s, a]
        assert (possible > 0).all()


def test_monte_carlo_rejects_zero_rollouts(rng):
    mdp = random_mdp(rng, 2, 2, 2)
    with pytest.raises(ValueError):
        monte_carlo_cost(mdp, DeterministicPolicy(np.zeros(2, int), 2), 0, 0)
