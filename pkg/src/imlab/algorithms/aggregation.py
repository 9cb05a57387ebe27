"""Dataset-aggregation methods: DAgger (with optional coaching) and AggreVaTe."""

from __future__ import annotations

import numpy as np

from ..expert import ExpertOracle
from ..learners import Dataset
from ..mdp import TabularMdp, exact_cost, q_values
from ..policies import DeterministicPolicy, mixture, step_tables
from ..sampling import rng_for, rollout_batch, uniform_block
from ._common import (
    CONTINUE,
    EXPLORE,
    LABELS,
    ROLLIN,
    Hyperparameters,
    IterationRecord,
    beta_schedule,
    label_with_expert,
    new_trace,
    pick_best,
    policy_eps,
    prepare,
    step_index,
    switch_rollout,
)

DAGGER_DEFAULT_ITERATIONS = 20
AGGREVATE_DEFAULT_ITERATIONS = 10
HOPE_TIE_TOL = 1e-12


def coaching_cost(mdp: TabularMdp, expert) -> np.ndarray:
    """(T, S, A) cost of each action relative to the best one, under the expert's cost-to-go."""
    Q = q_values(mdp, expert).values
    return Q - Q.min(axis=2, keepdims=True)


def hope_actions(scores: np.ndarray, cost: np.ndarray, lam: float) -> np.ndarray:
    """argmax_a [lam * score(s, a) - cost(s, a)] row-wise; ties go to the lowest action."""
    val = lam * scores - cost
    best = val.max(axis=-1, keepdims=True)
    return np.argmax(val >= best - HOPE_TIE_TOL, axis=-1)


def coaching_lambda(hp: Hyperparameters, i: int) -> float:
    return hp.lambda0 * hp.lambda_decay ** (i - 1)


def dagger(mdp: TabularMdp, expert: ExpertOracle, learner, hp: Hyperparameters, coaching: bool = False):
    """DAgger: roll out the current policy, label every visited state, aggregate, retrain.

    The first policy is the expert. With ``coaching`` the labels are hope
    actions built from the learner's scores and the expert's cost-to-go
    disadvantage instead of expert queries. Returns the trained snapshot
    with the lowest validation cost.
    """
    prepare(mdp, expert)
    T, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    N = hp.n_iter if hp.n_iter is not None else DAGGER_DEFAULT_ITERATIONS
    n = hp.rollouts_per_iter
    trace = new_trace("dagger_coaching" if coaching else "dagger", hp, learner, expert, coaching=coaching, n_iter_used=N)
    trace.extras.update(n_iter=N, coaching=coaching, eps_distribution="learned")
    C = coaching_cost(mdp, expert.policy) if coaching else None

    current = expert  # pi_1
    trace.policies["pi_1"] = expert.policy
    expert_tables = step_tables(expert.policy, T)
    scores = expert_tables  # a one-hot score table for the expert, per step
    data = Dataset.empty(S, A)
    lambdas, hope_tables = [], []
    for i in range(1, N + 1):
        batch = rollout_batch(mdp, current, [(hp.seed, ROLLIN, i, j) for j in range(n)])
        states, steps = batch.states.ravel(), step_index(n, T)
        if coaching:
            lam = coaching_lambda(hp, i)
            lambdas.append(lam)
            sc = scores if scores.ndim == 3 else np.broadcast_to(scores, C.shape)
            hope = hope_actions(sc, C, lam)  # (T, S)
            hope_tables.append(hope)
            labels = hope[steps - 1, states]
        elif current is expert:  # the expert drove this batch; its actions are the labels
            labels = batch.actions.ravel()
        else:
            labels = label_with_expert(expert, states, steps, (hp.seed, LABELS, i))
        data = data.aggregate(Dataset(S, A, states, steps, labels, provenance=f"dagger iteration {i}"))
        model = learner.train(data)
        current = model.policy
        scores = np.asarray(model.scores)
        pid = f"pi_{i + 1}"
        trace.add(
            IterationRecord(i, pid, exact_cost(mdp, current), policy_eps(mdp, current, expert), expert.query_count, len(data)),
            current,
        )
    candidates = [(f"pi_{i}", trace.policies[f"pi_{i}"]) for i in range(2, N + 2)]
    trace.final_policy = pick_best(mdp, candidates, hp)
    trace.extras["candidates"] = [c for c, _ in candidates]
    trace.extras["rollout_policies"] = [f"pi_{i}" for i in range(1, N + 1)]
    if coaching:
        trace.extras.update(lambdas=lambdas, hope_labels=[h.tolist() for h in hope_tables])
    return trace.final, trace


def sample_cost_to_go(mdp: TabularMdp, continuation, steps, states, actions, keys) -> np.ndarray:
    """Realised cost of playing ``actions[i]`` in ``states[i]`` at ``steps[i]``
    and following ``continuation`` to the horizon; one Philox stream per key."""
    steps = np.asarray(steps, dtype=np.int64)
    U = uniform_block(list(keys), 2 + 3 * mdp.horizon)
    _, to_go, _ = switch_rollout(
        mdp, continuation, continuation, steps, steps, np.asarray(actions, dtype=np.int64), U,
        start_states=np.asarray(states, dtype=np.int64),
    )
    return to_go


def aggrevate(mdp: TabularMdp, expert: ExpertOracle, learner, hp: Hyperparameters):
    """AggreVaTe: explore one uniformly chosen step per sub-rollout, record the
    expert's realised cost-to-go and train a cost-sensitive classifier on the
    aggregate. Returns the trained snapshot with the lowest validation cost."""
    prepare(mdp, expert)
    T, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    N = hp.n_iter if hp.n_iter is not None else AGGREVATE_DEFAULT_ITERATIONS
    m = hp.samples_per_iter
    trace = new_trace("aggrevate", hp, learner, expert, n_iter_used=N)
    trace.extras.update(n_iter=N, eps_distribution="learned")

    learned = DeterministicPolicy(np.zeros(S, dtype=np.int64), A)
    data = Dataset.empty(S, A, with_costs=True)
    betas = []
    for i in range(1, N + 1):
        b = beta_schedule(hp.beta_schedule, i)
        betas.append(b)
        if b >= 1.0:
            rollin, record = expert, expert.policy
        elif b <= 0.0:
            rollin = record = learned
        else:
            rollin = mixture([expert, learned], [b, 1.0 - b])
            record = mixture([expert.policy, learned], [b, 1.0 - b])
        trace.policies[f"rollin_{i}"] = record
        trace.policies[f"pi_{i}"] = learned
        u = rng_for(hp.seed, EXPLORE, i).random((m, 2))
        t_explore = np.minimum((u[:, 0] * T).astype(np.int64), T - 1) + 1
        a_explore = np.minimum((u[:, 1] * A).astype(np.int64), A - 1)
        U = uniform_block([(hp.seed, CONTINUE, i, j) for j in range(m)], 2 + 3 * T)
        s_at, to_go, _ = switch_rollout(mdp, rollin, expert, np.ones(m, dtype=np.int64), t_explore, a_explore, U)
        costs = np.full((m, A), np.nan)
        costs[np.arange(m), a_explore] = to_go
        data = data.aggregate(Dataset(S, A, s_at, t_explore, a_explore, costs, provenance=f"aggrevate iteration {i}"))
        learned = learner.train(data).policy
        pid = f"pi_{i + 1}"
        trace.add(
            IterationRecord(i, pid, exact_cost(mdp, learned), policy_eps(mdp, learned, expert), expert.query_count, len(data)),
            learned,
        )
    candidates = [(f"pi_{i}", trace.policies[f"pi_{i}"]) for i in range(2, N + 2)]
    trace.final_policy = pick_best(mdp, candidates, hp)
    trace.extras.update(
        candidates=[c for c, _ in candidates],
        betas=betas,
        rollout_policies=[f"rollin_{i}" for i in range(1, N + 1)],
        executed_learners=[f"pi_{i}" for i in range(1, N + 1)],
    )
    return trace.final, trace
