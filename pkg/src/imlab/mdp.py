"""Tabular finite-horizon MDPs and exact dynamic-programming evaluation.

Costs live in [0, 1] and every evaluator *minimises* total cost. A policy's
law under a trajectory-level mixture is the weighted sum of its components'
laws, so every exact quantity here is linear in the mixture weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policies import (
    MixturePolicy,
    is_trajectory_mixture,
    step_tables,
)

BUILD_TOL = 1e-12
DERIVED_TOL = 1e-10


class DimensionError(ValueError):
    pass


class InvalidMdpError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP with per-step cost table ``cost[s, a]`` and horizon ``T``."""

    transition: np.ndarray  # (S, A, S)
    cost: np.ndarray  # (S, A)
    initial: np.ndarray  # (S,)
    horizon: int

    def __post_init__(self):
        P = np.array(self.transition, dtype=np.float64)
        C = np.array(self.cost, dtype=np.float64)
        I = np.array(self.initial, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise DimensionError(f"transition must have shape (S, A, S), got {P.shape}")
        if C.shape != P.shape[:2]:
            raise DimensionError(f"cost shape {C.shape} does not match transition {P.shape}")
        if I.shape != (P.shape[0],):
            raise DimensionError(f"initial shape {I.shape} does not match {P.shape[0]} states")
        if int(self.horizon) < 1:
            raise DimensionError("horizon must be a positive integer")
        for name, arr in (("transition", P), ("cost", C), ("initial", I)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    def with_horizon(self, horizon: int) -> "TabularMdp":
        return TabularMdp(self.transition, self.cost, self.initial, horizon)

    def check(self) -> "TabularMdp":
        report = validate_mdp(self)
        if report:
            raise InvalidMdpError("; ".join(report))
        return self


def validate_mdp(mdp: TabularMdp) -> list[str]:
    """List every violated invariant; empty means the MDP is well formed."""
    out = []
    P, C, I = mdp.transition, mdp.cost, mdp.initial
    for s, a, s2 in zip(*np.nonzero(P < 0)):
        out.append(f"transition[{s},{a},{s2}] = {P[s, a, s2]!r} is negative")
    sums = P.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > BUILD_TOL)):
        out.append(f"transition row ({s},{a}) sums to {sums[s, a]!r}, not 1")
    for s, a in zip(*np.nonzero((C < 0) | (C > 1) | ~np.isfinite(C))):
        out.append(f"cost[{s},{a}] = {C[s, a]!r} outside [0, 1]")
    for (s,) in zip(*np.nonzero(I < 0)):
        out.append(f"initial[{s}] = {I[s]!r} is negative")
    if abs(I.sum() - 1.0) > BUILD_TOL:
        out.append(f"initial distribution sums to {I.sum()!r}, not 1")
    return out


@dataclass(frozen=True, eq=False)
class StateDistributionSchedule:
    per_step: np.ndarray  # (T, S), row t-1 is d^t
    average: np.ndarray  # (S,)

    @property
    def horizon(self) -> int:
        return self.per_step.shape[0]


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: tuple[int, ...]
    actions: tuple[int, ...]
    costs: tuple[float, ...]
    total_cost: float


@dataclass(frozen=True, eq=False)
class QTable:
    """Expected cost-to-go ``values[t-1, s, a]`` of playing ``a`` in ``s`` at step ``t``
    and following the table's policy afterwards."""

    values: np.ndarray  # (T, S, A)

    @property
    def q_max(self) -> float:
        return float(self.values.max())

    def at(self, t: int) -> np.ndarray:
        return self.values[t - 1]


def check_dims(mdp: TabularMdp, policy) -> None:
    if policy.num_states != mdp.num_states or policy.num_actions != mdp.num_actions:
        raise DimensionError(
            f"policy is over ({policy.num_states} states, {policy.num_actions} actions), "
            f"mdp over ({mdp.num_states}, {mdp.num_actions})"
        )


def _components(policy):
    """(components, weights) of the trajectory-level law."""
    if is_trajectory_mixture(policy):
        return policy.components, policy.weights
    return (policy,), np.ones(1)


def propagate(mdp: TabularMdp, d: np.ndarray, table: np.ndarray) -> np.ndarray:
    """One step of the state chain: d'[s'] = sum_{s,a} d[s] pi(a|s) B(s,a,s')."""
    return np.einsum("sa,sax->x", d[:, None] * table, mdp.transition)


def distributions_from_tables(mdp: TabularMdp, tables: np.ndarray) -> np.ndarray:
    T = mdp.horizon
    out = np.empty((T, mdp.num_states))
    d = mdp.initial.copy()
    for t in range(T):
        out[t] = d
        if t + 1 < T:
            d = propagate(mdp, d, tables[t])
    return out


def exact_state_distributions(mdp: TabularMdp, policy) -> StateDistributionSchedule:
    check_dims(mdp, policy)
    comps, weights = _components(policy)
    per_step = np.zeros((mdp.horizon, mdp.num_states))
    for c, w in zip(comps, weights):
        per_step += w * distributions_from_tables(mdp, step_tables(c, mdp.horizon))
    return StateDistributionSchedule(per_step, per_step.mean(axis=0))


def cost_from_tables(mdp: TabularMdp, tables: np.ndarray) -> float:
    d = distributions_from_tables(mdp, tables)
    return float(np.einsum("ts,tsa,sa->", d, tables, mdp.cost))


def exact_cost(mdp: TabularMdp, policy) -> float:
    """Expected total T-step cost J of ``policy``."""
    check_dims(mdp, policy)
    comps, weights = _components(policy)
    return float(sum(w * cost_from_tables(mdp, step_tables(c, mdp.horizon)) for c, w in zip(comps, weights)))


def q_from_tables(mdp: TabularMdp, tables: np.ndarray) -> np.ndarray:
    T, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    Q = np.empty((T, S, A))
    v_next = np.zeros(S)
    for t in range(T - 1, -1, -1):
        Q[t] = mdp.cost + mdp.transition @ v_next
        v_next = (tables[t] * Q[t]).sum(axis=1)
    return Q


def q_values(mdp: TabularMdp, policy) -> QTable:
    check_dims(mdp, policy)
    if isinstance(policy, MixturePolicy) and not policy.per_step:
        raise TypeError("q_values is undefined for trajectory-level mixtures; evaluate components")
    return QTable(q_from_tables(mdp, step_tables(policy, mdp.horizon)))


def reachable_states(mdp: TabularMdp) -> np.ndarray:
    """(T, S) boolean mask of states reachable at each step under some action sequence."""
    T, S = mdp.horizon, mdp.num_states
    mask = np.zeros((T, S), dtype=bool)
    mask[0] = mdp.initial > 0
    succ = mdp.transition.max(axis=1) > 0  # (S, S): any action reaches s'
    for t in range(1, T):
        mask[t] = succ[mask[t - 1]].any(axis=0)
    return mask
