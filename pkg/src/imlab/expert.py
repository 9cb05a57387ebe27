"""The expert: optimal policy by backward induction, a query-counting oracle,
and the one-step disadvantage constant ``u``."""

from __future__ import annotations

import threading

import numpy as np

from .mdp import TabularMdp, q_values, reachable_states
from .policies import (
    DeterministicPolicy,
    NonStationaryPolicy,
    StochasticPolicy,
    flip_policy,
    inverse_cdf,
    is_deterministic,
    step_tables,
)
from .sampling import rng_for

TIE_TOL = 1e-12


def optimal_policy(mdp: TabularMdp) -> NonStationaryPolicy:
    """Deterministic non-stationary cost-minimising policy; ties go to the lowest action."""
    T, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    v_next = np.zeros(S)
    steps = [None] * T
    for t in range(T - 1, -1, -1):
        q = mdp.cost + mdp.transition @ v_next
        best = q.min(axis=1, keepdims=True)
        choice = np.argmax(q <= best + TIE_TOL, axis=1)
        steps[t] = DeterministicPolicy(choice, A)
        v_next = q[np.arange(S), choice]
    return NonStationaryPolicy(tuple(steps))


class ExpertOracle:
    """Answers action queries and counts them.

    The counter is guarded by a lock so rollouts may be served from several
    threads. Exact evaluators read ``policy`` directly and do not count.
    """

    def __init__(self, policy, label: str = "optimal", rng_seed: int = 0):
        self.policy = policy
        self.label = label
        self._lock = threading.Lock()
        self._count = 0
        self._rng = rng_for(rng_seed, 0x0E)

    @property
    def query_count(self) -> int:
        return self._count

    @property
    def num_states(self) -> int:
        return self.policy.num_states

    @property
    def num_actions(self) -> int:
        return self.policy.num_actions

    @property
    def horizon(self) -> int | None:
        return getattr(self.policy, "horizon", None)

    def probs(self, t: int) -> np.ndarray:
        return self.policy.probs(t)

    def _record(self, n: int) -> None:
        with self._lock:
            self._count += n

    def act(self, t: int, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Serve a batch of queries at step ``t``; ``u`` drives stochastic experts."""
        self._record(len(states))
        return self.policy.act(t, states, u)

    def query(self, state: int, t: int) -> int:
        if not 0 <= state < self.num_states:
            raise IndexError(f"state {state} out of range")
        h = self.horizon
        if t < 1 or (h is not None and t > h):
            raise IndexError(f"step {t} out of range 1..{h}")
        with self._lock:
            self._count += 1
            u = self._rng.random(1)
        return int(self.policy.act(t, np.array([state]), u)[0])

    def __repr__(self) -> str:
        return f"ExpertOracle(label={self.label!r}, query_count={self._count})"


def expert_query(oracle: ExpertOracle, state: int, t: int) -> int:
    return oracle.query(state, t)


def corrupt_expert(policy, error_rate: float, rng_seed: int) -> ExpertOracle:
    """Oracle that keeps the expert action with probability ``1 - error_rate``
    and otherwise answers a uniformly random other action."""
    if not 0.0 <= error_rate <= 1.0:
        raise ValueError(f"error_rate {error_rate} outside [0, 1]")
    if not is_deterministic(policy):
        raise ValueError("corrupt_expert expects a deterministic policy")
    return ExpertOracle(flip_policy(policy, error_rate), label=f"corrupted:rate={error_rate:g}", rng_seed=rng_seed)


def disadvantage_table(mdp: TabularMdp, expert) -> np.ndarray:
    """(T, S, A) array of Q*(t, s, a) - Q*(t, s, expert_t(s))."""
    Q = q_values(mdp, expert).values
    tables = step_tables(expert, mdp.horizon)
    v = (tables * Q).sum(axis=2, keepdims=True)
    return Q - v


def compute_u(mdp: TabularMdp, expert) -> float:
    """Largest cost-to-go increase from deviating once from ``expert`` at any
    (step, state) reachable under some action sequence."""
    if not is_deterministic(expert):
        raise ValueError("compute_u expects a deterministic expert")
    adv = disadvantage_table(mdp, expert)
    mask = reachable_states(mdp)
    vals = adv[mask]
    return float(max(0.0, vals.max())) if vals.size else 0.0
