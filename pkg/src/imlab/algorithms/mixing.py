"""Stochastic mixing methods: SEARN and SMILe.

Both keep a trajectory-level mixture that starts as the expert and shifts
weight geometrically onto learned policies. The returned policy drops the
expert component and renormalises.
"""

from __future__ import annotations

import numpy as np

from ..expert import ExpertOracle
from ..learners import Dataset, disagreement
from ..mdp import (
    TabularMdp,
    cost_from_tables,
    distributions_from_tables,
    exact_cost,
    exact_state_distributions,
    q_values,
)
from ..policies import mixture, step_tables
from ..sampling import rollout_batch, uniform_block
from ._common import (
    CONTINUE,
    LABELS,
    ROLLIN,
    HyperparameterError,
    Hyperparameters,
    IterationRecord,
    label_with_expert,
    new_trace,
    prepare,
    smile_default_iterations,
    step_index,
    switch_rollout,
)

SEARN_DEFAULT_PASSES = 10


class UnmixError(ValueError):
    pass


def smile_weights(alpha: float, i: int) -> np.ndarray:
    """Closed-form weights after ``i`` iterations: entry 0 is the expert
    ``(1-a)^i``, entry ``j`` the j-th learned policy ``a (1-a)^(j-1)``."""
    if not 0.0 < alpha < 1.0:
        raise HyperparameterError("alpha must lie in (0, 1)")
    if i < 0:
        raise ValueError("i must be >= 0")
    w = np.empty(i + 1)
    w[0] = (1.0 - alpha) ** i
    w[1:] = alpha * (1.0 - alpha) ** np.arange(i)
    return w


def unmix(components, weights, expert_index: int = 0):
    """Drop the expert component and renormalise the remaining weights."""
    weights = np.asarray(weights, dtype=np.float64)
    rest = np.delete(weights, expert_index)
    mass = rest.sum()
    if mass <= 1e-12:
        raise UnmixError("no learned mass left once the expert is removed; use more iterations")
    comps = [c for k, c in enumerate(components) if k != expert_index]
    rest = rest / mass
    rest[-1] = 1.0 - rest[:-1].sum()  # absorb rounding so the weights sum to 1
    if rest[-1] < 0:
        rest[-1] = 0.0
    return mixture(comps, rest)


def smile(mdp: TabularMdp, expert: ExpertOracle, learner, hp: Hyperparameters):
    """SMILe with trajectory-level mixing. Returns (unmixed policy, trace)."""
    prepare(mdp, expert)
    T, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    alpha = hp.alpha if hp.alpha is not None else 1.0 / (T * T) if T > 1 else 0.5
    N = hp.n_iter if hp.n_iter is not None else smile_default_iterations(T)
    n = hp.rollouts_per_iter
    trace = new_trace("smile", hp, learner, expert, alpha_used=alpha, n_iter_used=N)
    trace.extras.update(alpha=alpha, n_iter=N, eps_distribution="previous mixture")

    # exact quantities of each component, cached so mixture values stay linear
    expert_tables = step_tables(expert.policy, T)
    comp_cost = [cost_from_tables(mdp, expert_tables)]
    expert_dist = distributions_from_tables(mdp, expert_tables)
    learned_dist = np.zeros_like(expert_dist)  # running sum of a(1-a)^(j-1) d_j
    learned = []
    size = 0
    for i in range(1, N + 1):
        w_prev = smile_weights(alpha, i - 1)
        rollin = mixture([expert] + learned, w_prev) if learned else expert
        batch = rollout_batch(mdp, rollin, [(hp.seed, ROLLIN, i, j) for j in range(n)])
        states, steps = batch.states.ravel(), step_index(n, T)
        labels = label_with_expert(expert, states, steps, (hp.seed, LABELS, i))
        data = Dataset(S, A, states, steps, labels, provenance=f"smile iteration {i}")
        hat = learner.train(data).policy
        size += len(data)

        tables = step_tables(hat, T)
        d_prev = w_prev[0] * expert_dist + learned_dist
        train_eps = float((d_prev * disagreement(hat, expert.policy, T)).sum() / T)
        learned.append(hat)
        comp_cost.append(cost_from_tables(mdp, tables))
        w = smile_weights(alpha, i)
        learned_dist += w[i] * distributions_from_tables(mdp, tables)
        J_mix = float(np.dot(w, comp_cost))
        trace.add(
            IterationRecord(i, f"hat_{i}", J_mix, train_eps, expert.query_count, size, {"component_J": comp_cost[-1]}),
            hat,
        )

    final_w = smile_weights(alpha, N)
    policy = unmix([expert.policy] + learned, final_w)
    trace.policies["unmixed"] = policy
    trace.final_policy = "unmixed"
    trace.extras["final_weights"] = final_w.tolist()
    trace.extras["J_mixture"] = float(np.dot(final_w, comp_cost))
    return policy, trace


def _mixture_q(q_tables: list, weights) -> np.ndarray:
    """Cost-to-go of playing ``a`` then continuing with a fresh draw from the mixture."""
    return sum(w * q for q, w in zip(q_tables, weights))


def searn(mdp: TabularMdp, expert: ExpertOracle, learner, hp: Hyperparameters):
    """SEARN with stochastic interpolation ``beta * new + (1 - beta) * current``.

    Per-action costs are exact when ``|S| |A| T`` is at most
    ``hp.searn_exact_threshold`` and Monte-Carlo continuations otherwise.
    """
    prepare(mdp, expert)
    T, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    N = hp.n_iter if hp.n_iter is not None else SEARN_DEFAULT_PASSES
    beta, n = hp.beta, hp.rollouts_per_iter
    exact = S * A * T <= hp.searn_exact_threshold
    trace = new_trace("searn", hp, learner, expert, n_iter_used=N)
    trace.extras.update(beta=beta, n_iter=N, exact_costs=exact, eps_distribution="current mixture")

    comps: list = []  # learned policies, oldest first
    weights = np.array([1.0])  # expert first
    q_cache = [q_values(mdp, expert.policy).values] if exact else []
    size = 0
    for i in range(1, N + 1):
        current = mixture([expert] + comps, weights) if comps else expert
        batch = rollout_batch(mdp, current, [(hp.seed, ROLLIN, i, j) for j in range(n)])
        states, steps = batch.states.ravel(), step_index(n, T)
        if exact:
            q = _mixture_q(q_cache, weights)
            costs = q[steps - 1, states]
        else:
            costs = _continuation_costs(mdp, current, states, steps, hp, i)
        data = Dataset(S, A, states, steps, np.argmin(costs, axis=1), costs, provenance=f"searn pass {i}")
        new = learner.train(data).policy
        size += len(data)

        comps.append(new)
        trace.policies[f"h_{i}"] = new
        weights = np.concatenate([(1.0 - beta) * weights, [beta]])
        if exact:
            q_cache.append(q_values(mdp, new).values)
        snapshot = unmix([expert.policy] + comps, weights)
        d_cur = exact_state_distributions(mdp, current)
        eps = float((d_cur.per_step * disagreement(new, expert.policy, T)).sum() / T)
        trace.add(
            IterationRecord(i, f"pass_{i}", exact_cost(mdp, snapshot), eps, expert.query_count, size),
            snapshot,
        )
    trace.final_policy = f"pass_{N}"
    trace.extras.update(expert_weight=float(weights[0]), learned=[f"h_{i}" for i in range(1, N + 1)])
    return trace.final, trace


def _continuation_costs(mdp, current, states, steps, hp, i) -> np.ndarray:
    """Monte-Carlo cost-to-go for every action at each (state, step)."""
    T, A = mdp.horizon, mdp.num_actions
    k = hp.searn_continuations
    rows = len(states)
    s_rep = np.repeat(states, A * k)
    t_rep = np.repeat(steps, A * k)
    a_rep = np.tile(np.repeat(np.arange(A), k), rows)
    keys = [(hp.seed, CONTINUE, i, r) for r in range(rows * A * k)]
    U = uniform_block(keys, 2 + 3 * T)
    _, to_go, _ = switch_rollout(mdp, current, current, t_rep, t_rep, a_rep, U, start_states=s_rep)
    return to_go.reshape(rows, A, k).mean(axis=2)
