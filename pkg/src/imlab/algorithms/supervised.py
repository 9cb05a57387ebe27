"""Passive imitation: one-shot behaviour cloning and step-by-step forward training."""

from __future__ import annotations

import numpy as np

from ..expert import ExpertOracle
from ..learners import measured_eps
from ..mdp import TabularMdp, exact_cost, exact_state_distributions
from ..policies import NonStationaryPolicy
from ..sampling import rollout_batch
from ._common import (
    ROLLIN,
    HyperparameterError,
    Hyperparameters,
    IterationRecord,
    dataset_from_batch,
    new_trace,
    policy_eps,
    prepare,
    step_index,
)


def supervised_bc(mdp: TabularMdp, expert: ExpertOracle, learner, hp: Hyperparameters):
    """Train once on expert trajectories; returns (policy, trace)."""
    prepare(mdp, expert)
    T, n = mdp.horizon, hp.rollouts_per_iter
    batch = rollout_batch(mdp, expert, [(hp.seed, ROLLIN, 1, j) for j in range(n)])
    data = dataset_from_batch(
        mdp.num_states, mdp.num_actions, batch.states, step_index(n, T), batch.actions, "expert rollouts"
    )
    policy = learner.train(data).policy
    trace = new_trace("supervised_bc", hp, learner, expert)
    trace.extras["eps_distribution"] = "expert"
    eps = measured_eps(mdp, policy, expert.policy, exact_state_distributions(mdp, expert.policy))
    trace.add(
        IterationRecord(1, "bc", exact_cost(mdp, policy), eps, expert.query_count, len(data)),
        policy,
    )
    trace.final_policy = "bc"
    return policy, trace


def forward_training(mdp: TabularMdp, expert: ExpertOracle, learner, hp: Hyperparameters):
    """Learn the step-``i`` policy on states reached by the learned steps
    ``1..i-1`` followed by the expert; returns a non-stationary policy."""
    prepare(mdp, expert)
    T, n = mdp.horizon, hp.rollouts_per_iter
    if hp.n_iter is not None and hp.n_iter != T:
        raise HyperparameterError(f"forward training needs n_iter == T ({T}), got {hp.n_iter}")
    trace = new_trace("forward_training", hp, learner, expert)
    trace.extras["eps_distribution"] = "learned"
    learned: list = []
    size = 0
    for i in range(1, T + 1):
        composite = NonStationaryPolicy(tuple(learned) + (expert,) * (T - i + 1))
        batch = rollout_batch(mdp, composite, [(hp.seed, ROLLIN, i, j) for j in range(n)])
        # the actions played at step i came from the expert and are the labels
        data = dataset_from_batch(
            mdp.num_states,
            mdp.num_actions,
            batch.states[:, i - 1],
            np.full(n, i),
            batch.actions[:, i - 1],
            f"forward step {i}",
        )
        learned.append(learner.train(data).policy)
        size += len(data)
        snapshot = NonStationaryPolicy(tuple(learned) + (expert.policy,) * (T - i))
        trace.add(
            IterationRecord(
                i, f"step_{i}", exact_cost(mdp, snapshot), policy_eps(mdp, snapshot, expert), expert.query_count, size
            ),
            snapshot,
        )
    policy = NonStationaryPolicy(tuple(learned))
    trace.final_policy = f"step_{T}"
    return policy, trace
