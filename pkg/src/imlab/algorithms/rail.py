"""Idealised reduction to i.i.d. active learning, one call per step of the horizon."""

from __future__ import annotations

import numpy as np

from ..expert import ExpertOracle
from ..learners import active_learn
from ..mdp import TabularMdp, exact_cost, exact_state_distributions
from ..policies import DeterministicPolicy
from ._common import HyperparameterError, Hyperparameters, IterationRecord, new_trace, policy_eps, prepare


def rail(mdp: TabularMdp, expert: ExpertOracle, learner, hp: Hyperparameters):
    """Call ``active_learn`` T times, each on the exact state distribution of
    the previous policy and with confidence ``delta / t``."""
    prepare(mdp, expert)
    T = mdp.horizon
    if hp.n_iter is not None and hp.n_iter != T:
        raise HyperparameterError(f"RAIL needs n_iter == T ({T}), got {hp.n_iter}")
    if hp.rail_init == "expert":
        prev = expert.policy
    else:
        prev = DeterministicPolicy(np.zeros(mdp.num_states, dtype=np.int64), mdp.num_actions)
    trace = new_trace("rail", hp, learner, expert)
    trace.extras["eps_distribution"] = "learned"
    size = 0
    for t in range(1, T + 1):
        dist = exact_state_distributions(mdp, prev)
        prev = active_learn(
            hp.active_eps, hp.active_delta / t, dist, expert, hp.active_budget, (hp.seed, t), learner
        )
        size += hp.active_budget
        trace.add(
            IterationRecord(t, f"call_{t}", exact_cost(mdp, prev), policy_eps(mdp, prev, expert), expert.query_count, size),
            prev,
        )
    trace.final_policy = f"call_{T}"
    return prev, trace
