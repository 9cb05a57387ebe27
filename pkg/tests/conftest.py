import numpy as np
import pytest
from hypothesis import strategies as st

from imlab.mdp import TabularMdp
from imlab.policies import DeterministicPolicy, MixturePolicy, NonStationaryPolicy, StochasticPolicy

from oracles import random_mdp, random_stochastic_table


@st.composite
def small_mdps(draw, max_states=4, max_actions=3, max_horizon=4):
    S = draw(st.integers(1, max_states))
    A = draw(st.integers(1, max_actions))
    T = draw(st.integers(1, max_horizon))
    seed = draw(st.integers(0, 2**32 - 1))
    deterministic = draw(st.booleans())
    return random_mdp(np.random.default_rng(seed), S, A, T, deterministic=deterministic)


@st.composite
def policies_for(draw, mdp: TabularMdp, allow_mixture=True):
    """Any policy kind over the MDP's spaces (mixtures are not nested)."""
    S, A, T = mdp.num_states, mdp.num_actions, mdp.horizon
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    kinds = ["deterministic", "stochastic", "nonstationary"] + (["mixture", "per_step"] if allow_mixture else [])
    kind = draw(st.sampled_from(kinds))
    if kind == "deterministic":
        return DeterministicPolicy(rng.integers(0, A, S), A)
    if kind == "stochastic":
        return StochasticPolicy(random_stochastic_table(rng, S, A))
    if kind == "nonstationary":
        return NonStationaryPolicy(
            tuple(
                DeterministicPolicy(rng.integers(0, A, S), A) if rng.random() < 0.5 else StochasticPolicy(random_stochastic_table(rng, S, A))
                for _ in range(T)
            )
        )
    comps = [draw(policies_for(mdp, allow_mixture=False)) for _ in range(draw(st.integers(1, 3)))]
    w = rng.random(len(comps)) + 0.05
    return MixturePolicy(tuple(comps), w / w.sum(), per_step=(kind == "per_step"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
