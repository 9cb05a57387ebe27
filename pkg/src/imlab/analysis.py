"""Executable regret bounds, policy disadvantages, the no-mistake decomposition
of the supervised analysis, and compounding-exponent fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from scipy.stats import linregress

from .expert import ExpertOracle, compute_u, optimal_policy
from .learners import disagreement, make_learner
from .mdp import (
    TabularMdp,
    cost_from_tables,
    distributions_from_tables,
    exact_cost,
    exact_state_distributions,
    q_values,
)
from .policies import MixturePolicy, is_deterministic, is_trajectory_mixture, step_tables

HOLD_TOL = 1e-9

THEOREM_ALGORITHMS = {
    1: ("supervised_bc",),
    2: ("forward_training",),
    3: ("searn",),
    4: ("smile",),
    5: ("dagger",),
    6: ("dagger_coaching",),
    7: ("aggrevate",),
}
# theorems whose right-hand side is an explicit inequality that must hold
ASSERTED = frozenset({1, 2, 5})


class BoundMismatchError(ValueError):
    pass


@dataclass
class BoundReport:
    theorem: int
    algo: str
    lhs: float
    rhs: float
    J_expert: float
    constituents: dict[str, Any]
    distribution: str  # which state distribution the loss terms were measured under
    asserted: bool = True

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.slack >= -HOLD_TOL

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(slack=self.slack, holds=self.holds)
        return d


def _expert_policy(expert):
    return expert.policy if isinstance(expert, ExpertOracle) else expert


def _components(policy):
    if is_trajectory_mixture(policy):
        return list(policy.components), np.asarray(policy.weights)
    return [policy], np.ones(1)


def _own_eps(mdp: TabularMdp, policy, expert) -> float:
    """Disagreement with the expert under the policy's own distribution,
    component by component for trajectory mixtures."""
    T = mdp.horizon
    comps, w = _components(policy)
    total = 0.0
    for c, wc in zip(comps, w):
        tables = step_tables(c, T)
        d = distributions_from_tables(mdp, tables)
        total += wc * float((d * disagreement(c, expert, T)).sum() / T)
    return total


def _dist(mdp: TabularMdp, policy) -> np.ndarray:
    return exact_state_distributions(mdp, policy).per_step


def best_in_class_loss(weights: np.ndarray, num_actions: int, flip_rate: float) -> float:
    """min over stationary deterministic tables, composed with the learner's
    flip, of sum_{s,a} weights[s, a] * P(policy disagrees with label a at s).

    ``weights[s, a]`` is the total mass of records at ``s`` labelled ``a``.
    """
    if num_actions == 1:
        return 0.0
    total = weights.sum(axis=1)
    keep = 1.0 - flip_rate
    other = flip_rate / (num_actions - 1)
    # agreement = keep * w[s, chosen] + other * (total - w[s, chosen]); past
    # flip rate (A-1)/A the flip favours the least-labelled choice
    best = weights.max(axis=1) if keep >= other else weights.min(axis=1)
    agree = (keep - other) * best + other * total
    return float((total - agree).sum())


def _label_mass(dists: list[np.ndarray], labels: list[np.ndarray], num_actions: int) -> np.ndarray:
    """(S, A) mass of (state, label) pairs summed over iterations and steps."""
    S = dists[0].shape[1]
    mass = np.zeros((S, num_actions))
    for d, lab in zip(dists, labels):
        T = d.shape[0]
        for t in range(T):
            np.add.at(mass, (np.arange(S), lab[t]), d[t])
    return mass


def _subset_sums(mdp: TabularMdp, base_tables: np.ndarray, new_tables: np.ndarray, k: int) -> np.ndarray:
    """Sum over all k-subsets of steps of the expected T-step cost when
    ``new`` plays at the subset steps and ``base`` elsewhere.

    ``base_tables`` is (M, T, S, A) for M base policies; returns (M,).
    """
    M, T, S, A = base_tables.shape
    P, C = mdp.transition, mdp.cost
    W = np.zeros((M, k + 1, S))
    for t in range(T - 1, -1, -1):
        later = T - t - 1  # steps after this one
        cb = (base_tables[:, t] * C).sum(axis=2)  # (M, S)
        cn = (new_tables[t] * C).sum(axis=1)  # (S,)
        Pb = np.einsum("msa,sap->msp", base_tables[:, t], P)
        Pn = np.einsum("sa,sap->sp", new_tables[t], P)
        nxt = W
        W = np.empty_like(nxt)
        for r in range(k + 1):
            W[:, r] = cb * math.comb(later, r) + np.einsum("msp,mp->ms", Pb, nxt[:, r])
            if r >= 1:
                W[:, r] += cn * math.comb(later, r - 1) + nxt[:, r - 1] @ Pn.T
    return W[:, k] @ mdp.initial


def policy_disadvantage(mdp: TabularMdp, base, new, k: int) -> tuple[float, float]:
    """Expected T-step cost when ``new`` replaces ``base`` at a uniformly random
    k-subset of steps, and its excess over ``base``'s own cost.

    A trajectory-level mixture ``base`` draws its component once per episode,
    so the value is the weighted sum over components. Returns (Jbar_k, A_k).
    """
    T = mdp.horizon
    if k < 0 or k > T:
        raise ValueError(f"k must lie in 0..T ({T}), got {k}")
    if is_trajectory_mixture(new):
        raise ValueError("the substituted policy cannot be a trajectory-level mixture")
    comps, w = _components(base)
    base_tables = np.stack([step_tables(c, T) for c in comps])
    base_cost = float(sum(wc * cost_from_tables(mdp, bt) for wc, bt in zip(w, base_tables)))
    if k == 0:
        return base_cost, 0.0
    sums = _subset_sums(mdp, base_tables, step_tables(new, T), k)
    jbar = float(w @ sums) / math.comb(T, k)
    return jbar, jbar - base_cost


def _require(run, theorem: int) -> None:
    if theorem not in THEOREM_ALGORITHMS:
        raise BoundMismatchError(f"unknown theorem {theorem}; expected 1..7")
    if run.algo not in THEOREM_ALGORITHMS[theorem]:
        raise BoundMismatchError(
            f"theorem {theorem} applies to {THEOREM_ALGORITHMS[theorem][0]}, not to a {run.algo} run"
        )


def theorems_for(algo: str) -> list[int]:
    return [k for k, v in THEOREM_ALGORITHMS.items() if algo in v]


def bound_theorem(theorem: int, mdp: TabularMdp, expert, run, policies: dict | None = None) -> BoundReport:
    """Evaluate both sides of the regret bound matching ``run``'s algorithm.

    ``policies`` overrides the trace's own policy store (used after loading
    traces from disk).
    """
    _require(run, theorem)
    store = policies if policies is not None else run.policies
    ex = _expert_policy(expert)
    if not is_deterministic(ex):
        raise ValueError("bounds are stated against a deterministic expert")
    T = mdp.horizon
    J_star = exact_cost(mdp, ex)
    final = store[run.final_policy]
    flip = float(run.learner.get("flip_rate", 0.0))

    if theorem == 1:
        eps = float((_dist(mdp, ex) * disagreement(final, ex, T)).sum() / T)
        lhs = exact_cost(mdp, final)
        return BoundReport(1, run.algo, lhs, J_star + T * T * eps, J_star, {"eps": eps, "T": T}, "expert")

    u = compute_u(mdp, ex)
    if theorem == 2:
        eps = _own_eps(mdp, final, ex)
        lhs = exact_cost(mdp, final)
        return BoundReport(2, run.algo, lhs, J_star + u * T * eps, J_star, {"eps": eps, "u": u, "T": T}, "learned")
    if theorem == 5:
        return _dagger_bound(mdp, ex, run, store, J_star, u, flip)
    if theorem == 6:
        return _coaching_bound(mdp, ex, run, store, J_star, u, flip)
    if theorem == 7:
        return _aggrevate_bound(mdp, ex, run, store, J_star, flip)
    if theorem == 3:
        return _searn_bound(mdp, ex, run, store, J_star)
    return _smile_bound(mdp, ex, run, store, J_star)


def _dagger_bound(mdp, ex, run, store, J_star, u, flip) -> BoundReport:
    T, A = mdp.horizon, mdp.num_actions
    ids = run.extras["candidates"]
    cands = [store[i] for i in ids]
    N = len(cands)
    dists = [_dist(mdp, p) for p in cands]
    labels = [step_tables(ex, T).argmax(axis=2)] * N
    own = [float((d * disagreement(p, ex, T)).sum() / T) for d, p in zip(dists, cands)]
    eps_N = best_in_class_loss(_label_mass(dists, labels, A), A, flip) / (N * T)
    eps_regret = float(np.mean(own)) - eps_N
    lhs = exact_cost(mdp, store[run.final_policy])
    rhs = J_star + u * T * (eps_N + eps_regret)
    cons = {
        "eps_N": eps_N,
        "eps_regret": eps_regret,
        "u": u,
        "T": T,
        "N": N,
        "o1_measured": lhs - (J_star + u * T * eps_N),
        "o1_budget": u * T,
    }
    return BoundReport(5, run.algo, lhs, rhs, J_star, cons, "learned (candidate snapshots)")


def _coaching_bound(mdp, ex, run, store, J_star, u, flip) -> BoundReport:
    T, A = mdp.horizon, mdp.num_actions
    rollout_ids = run.extras["rollout_policies"]
    hope = [np.asarray(h) for h in run.extras["hope_labels"]]
    dists = [_dist(mdp, store[i]) for i in rollout_ids]
    N = len(dists)
    eps_tilde = best_in_class_loss(_label_mass(dists, hope, A), A, flip) / (N * T)
    lhs = exact_cost(mdp, store[run.final_policy])
    cons = {"eps_tilde_N": eps_tilde, "u": u, "T": T, "N": N, "o1_measured": lhs - (J_star + u * T * eps_tilde)}
    return BoundReport(6, run.algo, lhs, J_star + u * T * eps_tilde, J_star, cons, "rollout policies", asserted=False)


def _aggrevate_bound(mdp, ex, run, store, J_star, flip) -> BoundReport:
    T, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    Q = q_values(mdp, ex)
    regret_table = Q.values - Q.values.min(axis=2, keepdims=True)  # (T, S, A)
    rollout_ids = run.extras["rollout_policies"]
    learned_ids = run.extras["executed_learners"]
    N = len(rollout_ids)
    # per-state cost of each action, summed over iterations and steps
    total = np.zeros((S, A))
    own = 0.0
    for rid, lid in zip(rollout_ids, learned_ids):
        d = _dist(mdp, store[rid])
        total += np.einsum("ts,tsa->sa", d, regret_table) / T
        own += float(np.einsum("ts,tsa,tsa->", d, regret_table, step_tables(store[lid], T)) / T)
    keep, other = 1.0 - flip, (flip / (A - 1) if A > 1 else 0.0)
    # flipped deterministic choice a at s pays keep*c[a] + other*(sum - c[a])
    per_choice = (keep - other) * total + other * total.sum(axis=1, keepdims=True)
    best = float(per_choice.min(axis=1).sum())
    eps_class = best / N
    eps_regret = own / N - eps_class
    alpha = run.hyperparameters.get("alpha")
    alpha_used = float(alpha) if alpha is not None else 1.0
    third = T * math.log(T) * Q.q_max / (alpha_used * N) if T > 1 else 0.0
    lhs = exact_cost(mdp, store[run.final_policy])
    cons = {
        "eps_class": eps_class,
        "eps_regret": eps_regret,
        "Q_max": Q.q_max,
        "alpha": alpha_used,
        "alpha_from_config": alpha is not None,
        "N": N,
        "T": T,
        "rate_term": third,
    }
    return BoundReport(7, run.algo, lhs, J_star + T * (eps_class + eps_regret) + third, J_star, cons, "rollout policies", asserted=False)


def _mixture_sequence(ex, learned: list, rate: float, j: int, newest_heaviest: bool = True):
    """Components and weights of the geometric mixture after ``j`` updates.

    SEARN interpolates, so the newest policy carries ``rate``; SMILe adds
    policy ``i`` with ``rate (1-rate)^(i-1)``, so the oldest is heaviest.
    """
    w = np.empty(j + 1)
    w[0] = (1.0 - rate) ** j
    powers = np.arange(j - 1, -1, -1) if newest_heaviest else np.arange(j)
    w[1:] = rate * (1.0 - rate) ** powers
    return [ex] + learned[:j], w


def _stacked_disadvantages(mdp, comps_tables: np.ndarray, comp_costs: np.ndarray, learned_tables, weights_fn, k: int):
    """Sum over j of A_k(pi^{j-1}, hat_j) where pi^{j-1} mixes the first j components."""
    T = mdp.horizon
    total = 0.0
    for j in range(1, len(learned_tables) + 1):
        w = weights_fn(j - 1)
        sums = _subset_sums(mdp, comps_tables[:j], learned_tables[j - 1], k) / math.comb(T, k)
        total += float(w @ sums) - float(w @ comp_costs[:j])
    return total


def _geometric_terms(mdp, ex, learned: list, rate: float, ks=(1, 2), newest_heaviest: bool = True):
    T = mdp.horizon
    tables = np.stack([step_tables(ex, T)] + [step_tables(p, T) for p in learned])
    costs = np.array([cost_from_tables(mdp, t) for t in tables])

    def weights(j):
        return _mixture_sequence(ex, learned, rate, j, newest_heaviest)[1]

    return {k: _stacked_disadvantages(mdp, tables, costs, tables[1:], weights, k) for k in ks if k <= T}, costs


def _searn_bound(mdp, ex, run, store, J_star) -> BoundReport:
    T = mdp.horizon
    beta = float(run.extras["beta"])
    learned = [store[i] for i in run.extras["learned"]]
    N = len(learned)
    sums, costs = _geometric_terms(mdp, ex, learned, beta, ks=(1,))
    A1 = sums[1] / N
    lhs = float(_mixture_sequence(ex, learned, beta, N)[1] @ costs)
    rhs = J_star + T * beta * (1 - beta) ** (T - 1) * sums[1] + N * beta**2 * T * T * (T - 1) / 2
    cons = {"A1": A1, "alpha": beta, "N": N, "T": T, "J_unmixed": exact_cost(mdp, store[run.final_policy])}
    return BoundReport(3, run.algo, lhs, rhs, J_star, cons, "mixture iterates", asserted=False)


def _smile_bound(mdp, ex, run, store, J_star) -> BoundReport:
    T = mdp.horizon
    alpha = float(run.extras["alpha"])
    N = int(run.extras["n_iter"])
    learned = [store[f"hat_{i}"] for i in range(1, N + 1)]
    sums, costs = _geometric_terms(mdp, ex, learned, alpha, ks=(1, 2), newest_heaviest=False)
    w_final = _mixture_sequence(ex, learned, alpha, N, newest_heaviest=False)[1]
    lhs = float(w_final @ costs)
    A1, A2 = sums[1], sums.get(2, 0.0)
    rhs = (
        J_star
        + alpha * T * (1 - alpha) ** (T - 1) * A1
        + alpha**2 * T * (T - 1) / 2 * (1 - alpha) ** max(T - 2, 0) * A2
        + N * alpha**3 * T * math.comb(T, 3)
    )
    train_eps = np.array([r.eps for r in run.iterations])
    disc = (1 - alpha) ** np.arange(N)
    eps_tilde = float(alpha / (1 - (1 - alpha) ** N) * (disc * train_eps).sum())
    J_unmixed = exact_cost(mdp, store[run.final_policy])
    cons = {
        "A1": A1,
        "A2": A2,
        "eps_tilde": eps_tilde,
        "alpha": alpha,
        "N": N,
        "T": T,
        "J_unmixed": J_unmixed,
        "unmix_gap": J_unmixed - lhs,
        "unmix_gap_ok": J_unmixed <= lhs + 1 + HOLD_TOL,
    }
    return BoundReport(4, run.algo, lhs, rhs, J_star, cons, "mixture iterates", asserted=False)


@dataclass
class MistakeDecomposition:
    p: np.ndarray  # p[t] for t = 0..T, p[0] = 1
    d_clean: np.ndarray  # (T, S) state distribution given no mistake before t
    d_mistaken: np.ndarray  # (T, S) expert-driven distribution given a mistake before t
    e_clean: np.ndarray  # (T,) mistake rate under d_clean
    e_mistaken: np.ndarray  # (T,)
    eps: np.ndarray  # (T,) mistake rate under the expert's own distribution
    residuals: np.ndarray  # (T, S) |d_expert - (p d_clean + (1-p) d_mistaken)|
    p_margin: np.ndarray  # (T,) p[t] - (1 - sum_{i<=t} eps_i), must be >= 0
    chain_margin: np.ndarray  # (T,) cumulative eps minus the per-step regret term

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0

    def ok(self, tol: float = HOLD_TOL) -> bool:
        return (
            self.max_residual <= tol
            and bool((self.p_margin >= -tol).all())
            and bool((self.chain_margin >= -tol).all())
            and bool((np.diff(self.p) <= tol).all())
        )


def mistake_decomposition(mdp: TabularMdp, learned, expert) -> MistakeDecomposition:
    """Follow the expert's dynamics while flipping a coin for whether the
    learner would have disagreed; splits the expert's state distribution by
    whether a mistake has happened yet."""
    ex = _expert_policy(expert)
    if not is_deterministic(ex):
        raise ValueError("the decomposition needs a deterministic expert")
    if isinstance(learned, MixturePolicy) and not learned.per_step:
        raise ValueError("evaluate trajectory-level mixtures component by component")
    T, S = mdp.horizon, mdp.num_states
    ex_tables = step_tables(ex, T)
    err = disagreement(learned, ex, T)  # (T, S)
    d_star = distributions_from_tables(mdp, ex_tables)

    clean = mdp.initial.copy()
    dirty = np.zeros(S)
    p = np.ones(T + 1)
    d_clean = np.zeros((T, S))
    d_mistaken = np.zeros((T, S))
    e_clean = np.zeros(T)
    e_mistaken = np.zeros(T)
    residuals = np.zeros((T, S))
    for t in range(T):
        p_prev = clean.sum()
        if p_prev > 0:
            d_clean[t] = clean / p_prev
        if 1 - p_prev > 0 and dirty.sum() > 0:
            d_mistaken[t] = dirty / dirty.sum()
        e_clean[t] = float(d_clean[t] @ err[t])
        e_mistaken[t] = float(d_mistaken[t] @ err[t])
        residuals[t] = np.abs(d_star[t] - (p_prev * d_clean[t] + (1 - p_prev) * d_mistaken[t]))
        step = np.einsum("sa,sap->sp", ex_tables[t], mdp.transition)
        slipped = clean * err[t]
        clean, dirty = (clean - slipped) @ step, (dirty + slipped) @ step
        p[t + 1] = p_prev - slipped.sum()
    eps = (d_star * err).sum(axis=1)
    cum = np.cumsum(eps)
    p_margin = p[1:] - (1 - cum)
    chain_term = p[:-1] * e_clean + (1 - p[:-1])
    return MistakeDecomposition(p, d_clean, d_mistaken, e_clean, e_mistaken, eps, residuals, p_margin, cum - chain_term)


@dataclass
class CompoundingFit:
    slope: float | None
    stderr: float | None
    intercept: float | None
    undefined: bool
    points: list = field(default_factory=list)  # (T, seed, regret)
    dropped: int = 0


def fit_exponent(points) -> CompoundingFit:
    """Least-squares fit of log regret against log T; zero regrets are dropped."""
    pts = [(T, s, r) for T, s, r in points]
    keep = [(T, r) for T, _, r in pts if r > 1e-12]
    dropped = len(pts) - len(keep)
    if len({T for T, _ in keep}) < 2:
        return CompoundingFit(None, None, None, True, pts, dropped)
    x = np.log([T for T, _ in keep])
    y = np.log([r for _, r in keep])
    fit = linregress(x, y)
    return CompoundingFit(float(fit.slope), float(fit.stderr), float(fit.intercept), False, pts, dropped)


def compounding_fit(
    family: str,
    algorithm: str,
    T_values,
    flip_rate: float,
    seeds,
    env_params: dict | None = None,
    hyperparameters: dict | None = None,
) -> CompoundingFit:
    """Run ``algorithm`` for every (T, seed), measure exact regret and fit the
    growth exponent of regret in T."""
    from .algorithms import Hyperparameters, run_algorithm
    from .environments import EnvSpec, make_env

    T_values, seeds = list(T_values), list(seeds)
    if len(set(T_values)) < 4:
        raise ValueError("need at least 4 distinct horizons")
    if len(seeds) < 10:
        raise ValueError("need at least 10 seeds")
    points = []
    for T in T_values:
        for seed in seeds:
            mdp = make_env(EnvSpec(family, T, dict(env_params or {}), seed))
            pstar = optimal_policy(mdp)
            hp = Hyperparameters(**{**(hyperparameters or {}), "seed": seed})
            policy, _ = run_algorithm(algorithm, mdp, ExpertOracle(pstar), make_learner(flip_rate), hp)
            points.append((T, seed, exact_cost(mdp, policy) - exact_cost(mdp, pstar)))
    return fit_exponent(points)


__all__ = [
    "ASSERTED",
    "BoundMismatchError",
    "BoundReport",
    "CompoundingFit",
    "MistakeDecomposition",
    "THEOREM_ALGORITHMS",
    "best_in_class_loss",
    "bound_theorem",
    "compounding_fit",
    "fit_exponent",
    "mistake_decomposition",
    "policy_disadvantage",
    "theorems_for",
]
