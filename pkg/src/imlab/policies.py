"""Policy representations over finite state/action spaces.

Every policy-like object (including :class:`imlab.expert.ExpertOracle`)
exposes ``num_states``, ``num_actions``, ``probs(t)`` and
``act(t, states, u)``. Steps ``t`` are 1-based throughout the public API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

ROW_TOL = 1e-12


class PolicyError(ValueError):
    pass


def cdf_rows(p: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis, pinned to exactly 1 from the last
    positive entry onwards so inverse-CDF sampling never lands on a
    zero-probability index through rounding."""
    cum = np.cumsum(p, axis=-1)
    n = p.shape[-1]
    positive = p > 0
    last = n - 1 - np.argmax(positive[..., ::-1], axis=-1)
    cum[np.arange(n) >= last[..., None]] = 1.0
    return cum


def inverse_cdf(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index of the first bucket whose cumulative mass exceeds ``u`` (rows of ``cum``)."""
    idx = (u[..., None] >= cum).sum(axis=-1)
    return np.minimum(idx, cum.shape[-1] - 1)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    """Stationary policy choosing ``actions[s]`` in state ``s``."""

    actions: np.ndarray
    num_actions: int

    kind = "deterministic"

    def __post_init__(self):
        acts = np.array(self.actions, dtype=np.int64).reshape(-1)
        if acts.size and (acts.min() < 0 or acts.max() >= self.num_actions):
            raise PolicyError("action index out of range")
        object.__setattr__(self, "actions", _readonly(acts))

    @property
    def num_states(self) -> int:
        return self.actions.shape[0]

    @cached_property
    def table(self) -> np.ndarray:
        tab = np.zeros((self.num_states, self.num_actions))
        tab[np.arange(self.num_states), self.actions] = 1.0
        return _readonly(tab)

    def probs(self, t: int) -> np.ndarray:
        return self.table

    def act(self, t: int, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.actions[states]

    def action(self, s: int, t: int = 1) -> int:
        return int(self.actions[s])


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    """Stationary policy with action distribution ``table[s]``."""

    table: np.ndarray

    kind = "stochastic"

    def __post_init__(self):
        tab = np.array(self.table, dtype=np.float64)
        if tab.ndim != 2:
            raise PolicyError("stochastic table must be 2-D (states, actions)")
        if (tab < 0).any():
            raise PolicyError("negative action probability")
        bad = np.abs(tab.sum(axis=1) - 1.0) > ROW_TOL
        if bad.any():
            raise PolicyError(f"rows {np.flatnonzero(bad).tolist()} do not sum to 1")
        object.__setattr__(self, "table", _readonly(tab))

    @property
    def num_states(self) -> int:
        return self.table.shape[0]

    @property
    def num_actions(self) -> int:
        return self.table.shape[1]

    @cached_property
    def _cdf(self) -> np.ndarray:
        return cdf_rows(self.table)

    def probs(self, t: int) -> np.ndarray:
        return self.table

    def act(self, t: int, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        return inverse_cdf(self._cdf[states], u)


@dataclass(frozen=True, eq=False)
class NonStationaryPolicy:
    """One sub-policy per step; ``steps[t-1]`` acts at step ``t``.

    Sub-policies receive the true step index, so an expert oracle can sit in
    any slot (used while a composite is still partly expert-driven).
    """

    steps: tuple

    kind = "nonstationary"

    def __post_init__(self):
        steps = tuple(self.steps)
        if not steps:
            raise PolicyError("non-stationary policy needs at least one step")
        shapes = {(p.num_states, p.num_actions) for p in steps}
        if len(shapes) != 1:
            raise PolicyError("sub-policies disagree on state/action spaces")
        for p in steps:
            if isinstance(p, MixturePolicy):
                raise PolicyError("mixtures cannot be sub-policies")
        object.__setattr__(self, "steps", steps)

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def num_states(self) -> int:
        return self.steps[0].num_states

    @property
    def num_actions(self) -> int:
        return self.steps[0].num_actions

    def probs(self, t: int) -> np.ndarray:
        return self.steps[t - 1].probs(t)

    def act(self, t: int, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.steps[t - 1].act(t, states, u)


@dataclass(frozen=True, eq=False)
class MixturePolicy:
    """Weighted mixture of policies.

    With ``per_step=False`` (the default) one component is drawn per
    trajectory and kept for the whole episode. ``per_step=True`` redraws the
    component at every step. Nested mixtures with the same semantics are
    flattened on construction.
    """

    components: tuple
    weights: np.ndarray
    per_step: bool = False

    kind = "mixture"

    def __post_init__(self):
        comps, ws = [], []
        for c, w in zip(self.components, np.asarray(self.weights, dtype=np.float64)):
            if isinstance(c, MixturePolicy):
                if c.per_step != self.per_step:
                    raise PolicyError("cannot nest mixtures with different mixing semantics")
                comps.extend(c.components)
                ws.extend(w * c.weights)
            else:
                comps.append(c)
                ws.append(w)
        weights = np.array(ws, dtype=np.float64)
        if not comps:
            raise PolicyError("mixture needs at least one component")
        if (weights < 0).any() or abs(weights.sum() - 1.0) > ROW_TOL:
            raise PolicyError(f"mixture weights must be >= 0 and sum to 1 (sum={weights.sum()!r})")
        shapes = {(p.num_states, p.num_actions) for p in comps}
        if len(shapes) != 1:
            raise PolicyError("mixture components disagree on state/action spaces")
        object.__setattr__(self, "components", tuple(comps))
        object.__setattr__(self, "weights", _readonly(weights))

    @property
    def num_states(self) -> int:
        return self.components[0].num_states

    @property
    def num_actions(self) -> int:
        return self.components[0].num_actions

    @cached_property
    def _weight_cdf(self) -> np.ndarray:
        return cdf_rows(self.weights)

    def pick(self, u: np.ndarray) -> np.ndarray:
        return inverse_cdf(self._weight_cdf, u)

    def probs(self, t: int) -> np.ndarray:
        """Per-step averaged action table.

        Only the exact law of the process when ``per_step`` is set; the
        trajectory-level law is handled component-wise by the evaluators.
        """
        return sum(w * c.probs(t) for c, w in zip(self.components, self.weights))


Policy = DeterministicPolicy | StochasticPolicy | NonStationaryPolicy | MixturePolicy


def mixture(components: Sequence, weights: Sequence[float], per_step: bool = False) -> MixturePolicy:
    return MixturePolicy(tuple(components), np.asarray(weights, dtype=np.float64), per_step)


def is_trajectory_mixture(policy) -> bool:
    return isinstance(policy, MixturePolicy) and not policy.per_step


def step_tables(policy, horizon: int) -> np.ndarray:
    """Stack ``probs(t)`` for t = 1..T into a (T, S, A) array.

    Raises for trajectory-level mixtures, whose law is not a per-step table.
    """
    if is_trajectory_mixture(policy):
        raise PolicyError("trajectory-level mixture has no per-step table; evaluate components")
    if isinstance(policy, NonStationaryPolicy) and policy.horizon != horizon:
        raise PolicyError(f"non-stationary policy has {policy.horizon} steps, horizon is {horizon}")
    return np.stack([policy.probs(t) for t in range(1, horizon + 1)])


def is_deterministic(policy, horizon: int | None = None) -> bool:
    if isinstance(policy, DeterministicPolicy):
        return True
    if isinstance(policy, MixturePolicy):
        return False
    inner = getattr(policy, "policy", None)  # expert oracle
    if inner is not None:
        return is_deterministic(inner, horizon)
    if isinstance(policy, NonStationaryPolicy):
        return all(is_deterministic(p) for p in policy.steps)
    tab = policy.table
    return bool(np.all((tab == 0) | (tab == 1)))


def greedy_actions(policy, horizon: int) -> np.ndarray:
    """(T, S) action indices of a deterministic policy."""
    return step_tables(policy, horizon).argmax(axis=2)


def from_action_table(actions: np.ndarray, num_actions: int):
    """Build a policy from a (T, S) action table, collapsing to stationary if
    every step agrees."""
    actions = np.asarray(actions, dtype=np.int64)
    if (actions == actions[0]).all():
        return DeterministicPolicy(actions[0], num_actions)
    return NonStationaryPolicy(tuple(DeterministicPolicy(row, num_actions) for row in actions))


def flip_policy(policy, flip_rate: float):
    """Stochastic policy that keeps each action with prob ``1 - flip_rate`` and
    moves the rest uniformly to the other actions."""
    if not 0.0 <= flip_rate <= 1.0:
        raise PolicyError("flip_rate must lie in [0, 1]")
    if isinstance(policy, NonStationaryPolicy):
        return NonStationaryPolicy(tuple(flip_policy(p, flip_rate) for p in policy.steps))
    if isinstance(policy, MixturePolicy):
        raise PolicyError("flip a mixture's components instead")
    num_actions = policy.num_actions
    if flip_rate == 0.0 or num_actions == 1:
        return policy
    p = policy.probs(1)
    other = (1.0 - p) / (num_actions - 1)
    table = (1.0 - flip_rate) * p + flip_rate * other
    table = table / table.sum(axis=1, keepdims=True)
    return StochasticPolicy(table)
