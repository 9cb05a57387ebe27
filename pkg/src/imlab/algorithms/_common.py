from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from ..expert import ExpertOracle
from ..learners import Dataset, hypothesis_flip_rate, measured_eps
from ..mdp import TabularMdp, check_dims, exact_cost, exact_state_distributions
from ..policies import MixturePolicy, inverse_cdf
from ..sampling import Actors, act_grouped, mdp_cdfs, monte_carlo_cost, stream_id, uniform_block

ROLLIN = stream_id("rollin")
LABELS = stream_id("labels")
EXPLORE = stream_id("explore")
CONTINUE = stream_id("continue")


class HyperparameterError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparameters:
    n_iter: int | None = None  # N; None picks the algorithm's own default
    alpha: float | None = None  # SMILe mixing rate; None -> 1/T^2
    beta: float = 0.3  # SEARN interpolation
    beta_schedule: str = "first"  # AggreVaTe: "first" or "geometric:<ratio>"
    rollouts_per_iter: int = 10
    samples_per_iter: int = 100  # AggreVaTe m
    active_budget: int = 200  # RAIL queries per call
    active_eps: float = 0.1
    active_delta: float = 0.1
    rail_init: str = "expert"  # or "default"
    lambda0: float = 1.0
    lambda_decay: float = 0.9
    searn_continuations: int = 5
    searn_exact_threshold: int = 5000
    validation: str = "exact"  # or "rollout"
    validation_rollouts: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n_iter is not None and self.n_iter < 1:
            raise HyperparameterError("n_iter must be >= 1")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise HyperparameterError("alpha must lie in (0, 1)")
        if not 0.0 < self.beta <= 1.0:
            raise HyperparameterError("beta must lie in (0, 1]")
        if self.rollouts_per_iter < 1:
            raise HyperparameterError("rollouts_per_iter must be >= 1")
        if self.samples_per_iter < 1 or self.active_budget < 1 or self.searn_continuations < 1:
            raise HyperparameterError("sample counts must be >= 1")
        if self.validation not in ("exact", "rollout"):
            raise HyperparameterError("validation must be 'exact' or 'rollout'")
        if self.rail_init not in ("expert", "default"):
            raise HyperparameterError("rail_init must be 'expert' or 'default'")
        beta_schedule(self.beta_schedule, 1)
        if self.seed < 0:
            raise HyperparameterError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def beta_schedule(spec: str, i: int) -> float:
    """Expert weight at AggreVaTe iteration ``i`` (1-based)."""
    if spec == "first":
        return 1.0 if i == 1 else 0.0
    if spec.startswith("geometric:"):
        try:
            ratio = float(spec.split(":", 1)[1])
        except ValueError as exc:
            raise HyperparameterError(f"bad beta schedule {spec!r}") from exc
        if not 0.0 <= ratio <= 1.0:
            raise HyperparameterError("geometric ratio must lie in [0, 1]")
        return ratio ** (i - 1)
    raise HyperparameterError(f"unknown beta schedule {spec!r}")


@dataclass
class IterationRecord:
    iteration: int
    policy_id: str
    J_exact: float
    eps: float
    expert_queries: int
    dataset_size: int
    extras: dict[str, Any] = field(default_factory=dict)


@dataclass
class RunTrace:
    """Per-iteration audit trail of one algorithm run.

    ``policies`` maps every ``policy_id`` to an expert-free policy.
    ``extras`` holds algorithm-specific data the bound checks need.
    """

    algo: str
    hyperparameters: dict
    learner: dict
    expert_label: str
    iterations: list[IterationRecord] = field(default_factory=list)
    final_policy: str = ""
    policies: dict[str, Any] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)

    def add(self, record: IterationRecord, policy=None) -> None:
        if policy is not None:
            self.policies[record.policy_id] = policy
        self.iterations.append(record)

    @property
    def final(self):
        return self.policies[self.final_policy]

    @property
    def expert_queries(self) -> int:
        return self.iterations[-1].expert_queries if self.iterations else 0


def learner_description(learner) -> dict:
    inner = getattr(learner, "inner", learner)
    return {
        "kind": "tabular",
        "flip_rate": hypothesis_flip_rate(learner),
        "default_action": int(getattr(inner, "default_action", 0)),
        "smoothing": float(getattr(inner, "smoothing", 0.0)),
        "uniform_fallback": bool(getattr(inner, "uniform_fallback", False)),
    }


def new_trace(algo: str, hp: Hyperparameters, learner, expert: ExpertOracle, **extra_hp) -> RunTrace:
    hps = hp.to_dict()
    hps.update(extra_hp)
    return RunTrace(algo, hps, learner_description(learner), expert.label)


def prepare(mdp: TabularMdp, expert: ExpertOracle) -> None:
    check_dims(mdp, expert)


def step_index(n: int, T: int) -> np.ndarray:
    return np.tile(np.arange(1, T + 1), n)


def label_with_expert(expert: ExpertOracle, states: np.ndarray, steps: np.ndarray, key: tuple) -> np.ndarray:
    """Query the expert on each (state, step); queries are issued step by step."""
    labels = np.empty(len(states), dtype=np.int64)
    u = uniform_block([key], len(states))[0] if len(states) else np.empty(0)
    for t in np.unique(steps):
        rows = steps == t
        labels[rows] = expert.act(int(t), states[rows], u[rows])
    return labels


def policy_eps(mdp: TabularMdp, policy, expert: ExpertOracle) -> float:
    """Disagreement with the expert under the policy's own state distribution."""
    return measured_eps(mdp, policy, expert.policy, exact_state_distributions(mdp, policy))


def validation_score(mdp: TabularMdp, policy, hp: Hyperparameters, i: int) -> float:
    if hp.validation == "exact":
        return exact_cost(mdp, policy)
    return monte_carlo_cost(mdp, policy, hp.validation_rollouts, hp.seed * 100_003 + i)[0]


def pick_best(mdp: TabularMdp, candidates: list[tuple[str, Any]], hp: Hyperparameters) -> str:
    """Id of the candidate with the lowest validation cost (earliest on ties)."""
    scores = [validation_score(mdp, p, hp, i) for i, (_, p) in enumerate(candidates)]
    return candidates[int(np.argmin(scores))][0]


def switch_rollout(
    mdp: TabularMdp,
    before,
    after,
    start_steps: np.ndarray,
    switch_steps: np.ndarray,
    forced_actions: np.ndarray,
    U: np.ndarray,
    start_states: np.ndarray | None = None,
):
    """Rollouts that change controller part-way.

    Row ``i`` starts at step ``start_steps[i]`` (from ``start_states[i]``, or
    from the initial distribution when starting at step 1), follows ``before``
    while ``t < switch_steps[i]``, plays ``forced_actions[i]`` at the switch
    step and follows ``after`` until T. Mixture components are drawn once per
    row (``U[:, 0]`` for ``before``, ``U[:, 2]`` for ``after``).

    Returns (switch states, cost-to-go from the switch step, per-row total cost).
    """
    T = mdp.horizon
    n = len(switch_steps)
    init_cdf, trans_cdf = mdp_cdfs(mdp)

    def actors(policy, col):
        if isinstance(policy, MixturePolicy):
            return Actors(policy.components), policy.pick(U[:, col])
        return Actors((policy,)), np.zeros(n, dtype=np.int64)

    b_actors, b_which = actors(before, 0)
    a_actors, a_which = actors(after, 2)

    s = np.empty(n, dtype=np.int64)
    if start_states is None:
        s[:] = inverse_cdf(init_cdf, U[:, 1])
    else:
        s[:] = start_states
    switch_state = np.full(n, -1, dtype=np.int64)
    to_go = np.zeros(n)
    total = np.zeros(n)
    for k in range(int(start_steps.min()) if n else 1, T + 1):
        live = start_steps <= k
        if not live.any():
            continue
        u_act = U[:, 3 + 3 * (k - 1)]
        a = np.zeros(n, dtype=np.int64)
        pre = live & (k < switch_steps)
        at = live & (k == switch_steps)
        post = live & (k > switch_steps)
        if pre.any():
            a[pre] = act_grouped(b_actors, b_which[pre], k, s[pre], u_act[pre])
        if at.any():
            a[at] = forced_actions[at]
            switch_state[at] = s[at]
        if post.any():
            a[post] = act_grouped(a_actors, a_which[post], k, s[post], u_act[post])
        c = mdp.cost[s, a]
        total[live] += c[live]
        to_go[at | post] += c[at | post]
        nxt = inverse_cdf(trans_cdf[s, a], U[:, 4 + 3 * (k - 1)])
        s = np.where(live, nxt, s)
    return switch_state, to_go, total


def dataset_from_batch(S: int, A: int, states, steps, actions, provenance: str, costs=None) -> Dataset:
    return Dataset(S, A, np.asarray(states).ravel(), np.asarray(steps).ravel(), np.asarray(actions).ravel(), costs, provenance)


def smile_default_iterations(T: int) -> int:
    return max(1, math.ceil(2 * T * T * math.log(T))) if T > 1 else 1
