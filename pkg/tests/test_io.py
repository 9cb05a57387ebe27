import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imlab import io
from imlab.algorithms import Hyperparameters, run_algorithm
from imlab.analysis import bound_theorem
from imlab.environments import build_gridworld
from imlab.expert import ExpertOracle, optimal_policy
from imlab.learners import Dataset, make_learner
from imlab.mdp import exact_cost

from conftest import policies_for, small_mdps


def _roundtrip(obj):
    return json.loads(io.dumps(obj))


@settings(max_examples=40, deadline=None)
@given(small_mdps())
def test_mdp_roundtrip_is_value_exact(mdp):
    back = io.mdp_from_dict(_roundtrip(io.mdp_to_dict(mdp)))
    for name in ("transition", "cost", "initial"):
        np.testing.assert_array_equal(getattr(back, name), getattr(mdp, name))
    assert back.horizon == mdp.horizon


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_policy_roundtrip_is_value_exact(data):
    mdp = data.draw(small_mdps())
    pol = data.draw(policies_for(mdp))
    back = io.policy_from_dict(_roundtrip(io.policy_to_dict(pol)))
    assert type(back) is type(pol)
    assert io.dumps(io.policy_to_dict(back)) == io.dumps(io.policy_to_dict(pol))
    assert exact_cost(mdp, back) == exact_cost(mdp, pol)


@settings(max_examples=40)
@given(
    st.lists(st.tuples(st.integers(0, 3), st.integers(1, 5), st.integers(0, 2)), max_size=20),
    st.booleans(),
    st.integers(0, 1000),
)
def test_dataset_roundtrip_is_value_exact(recs, with_costs, seed):
    s, t, a = (list(x) for x in zip(*recs)) if recs else ([], [], [])
    costs = None
    if with_costs:
        costs = np.random.default_rng(seed).random((len(recs), 3))
        costs[costs < 0.3] = np.nan
    d = Dataset(4, 3, s, t, a, costs, "unit test")
    back = io.dataset_from_dict(_roundtrip(io.dataset_to_dict(d)))
    assert back.has_costs == d.has_costs
    assert back.provenance == "unit test"
    np.testing.assert_array_equal(back.states, d.states)
    np.testing.assert_array_equal(back.actions, d.actions)
    np.testing.assert_array_equal(back.steps, d.steps)
    if with_costs:
        np.testing.assert_array_equal(back.costs, d.costs)  # NaN positions included


def test_trace_and_report_roundtrip(tmp_path):
    mdp = build_gridworld(3, 3, slip=0.1, T=4)
    pstar = optimal_policy(mdp)
    _, trace = run_algorithm("dagger", mdp, ExpertOracle(pstar), make_learner(0.05), Hyperparameters(n_iter=3))
    path = io.save_trace(tmp_path / "t.json", trace)
    back = io.load_trace(path)
    assert back.final_policy == trace.final_policy
    assert [r.J_exact for r in back.iterations] == [r.J_exact for r in trace.iterations]
    rep = bound_theorem(5, mdp, pstar, trace)
    again = bound_theorem(5, mdp, pstar, back)
    assert again.to_dict() == rep.to_dict()
    assert io.report_from_dict(_roundtrip(io.report_to_dict(rep))).to_dict() == _roundtrip(rep.to_dict())


def test_format_errors():
    with pytest.raises(io.FormatError):
        io.mdp_from_dict({"cost": [[0.0]], "initial": [1.0]})
    with pytest.raises(io.FormatError):
        io.policy_from_dict({"kind": "neural"})
    with pytest.raises(io.FormatError):
        io.dataset_from_dict({"num_states": 1, "num_actions": 2, "records": [{"s": 0, "t": 1, "a": 0, "q": [0, 1]}, {"s": 0, "t": 1, "a": 0}]})
