"""Classification reduction layer: expert-labelled datasets and tabular learners."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .mdp import StateDistributionSchedule, TabularMdp, check_dims
from .policies import (
    DeterministicPolicy,
    StochasticPolicy,
    cdf_rows,
    flip_policy,
    inverse_cdf,
    is_trajectory_mixture,
    step_tables,
)
from .sampling import rng_for, stream_id


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable batch of (state, step, action[, cost vector]) records.

    Cost vectors use NaN for actions whose cost-to-go was not observed.
    """

    num_states: int
    num_actions: int
    states: np.ndarray
    steps: np.ndarray
    actions: np.ndarray
    costs: np.ndarray | None = None  # (n, A)
    provenance: str = ""

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64).reshape(-1)
        t = np.asarray(self.steps, dtype=np.int64).reshape(-1)
        a = np.asarray(self.actions, dtype=np.int64).reshape(-1)
        if not (len(s) == len(t) == len(a)):
            raise DatasetError("states, steps and actions must have equal length")
        if len(s) and (s.min() < 0 or s.max() >= self.num_states):
            raise DatasetError("state index out of range")
        if len(a) and (a.min() < 0 or a.max() >= self.num_actions):
            raise DatasetError("action index out of range")
        if len(t) and t.min() < 1:
            raise DatasetError("steps are 1-based")
        arrays = {"states": s, "steps": t, "actions": a}
        if self.costs is not None:
            c = np.asarray(self.costs, dtype=np.float64).reshape(len(s), self.num_actions)
            arrays["costs"] = c
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, num_states: int, num_actions: int, with_costs: bool = False, provenance: str = "") -> "Dataset":
        costs = np.empty((0, num_actions)) if with_costs else None
        return cls(num_states, num_actions, [], [], [], costs, provenance)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def has_costs(self) -> bool:
        return self.costs is not None

    def records(self):
        for i in range(len(self)):
            q = None if self.costs is None else tuple(float(x) for x in self.costs[i])
            yield int(self.states[i]), int(self.steps[i]), int(self.actions[i]), q

    def aggregate(self, other: "Dataset", provenance: str | None = None) -> "Dataset":
        """D ∪ D' as a new dataset; existing records come first, untouched."""
        if (other.num_states, other.num_actions) != (self.num_states, self.num_actions):
            raise DatasetError("datasets disagree on state/action spaces")
        if len(self) and len(other) and self.has_costs != other.has_costs:
            raise DatasetError("cannot mix records with and without cost vectors")
        with_costs = self.has_costs if len(self) else other.has_costs
        costs = None
        if with_costs:
            parts = [d.costs for d in (self, other) if d.costs is not None]
            costs = np.concatenate(parts) if parts else np.empty((0, self.num_actions))
        return Dataset(
            self.num_states,
            self.num_actions,
            np.concatenate([self.states, other.states]),
            np.concatenate([self.steps, other.steps]),
            np.concatenate([self.actions, other.actions]),
            costs,
            provenance if provenance is not None else (other.provenance or self.provenance),
        )


class Model(Protocol):
    policy: object

    def score(self, s: int, a: int) -> float: ...


class Learner(Protocol):
    def train(self, dataset: Dataset) -> Model: ...


@dataclass(frozen=True, eq=False)
class TabularModel:
    policy: object
    scores: np.ndarray  # (S, A)
    seen: np.ndarray  # (S,) bool

    def score(self, s: int, a: int) -> float:
        return float(self.scores[s, a])


@dataclass(frozen=True)
class TabularLearner:
    """One action per state: majority label, or lowest mean cost when records
    carry cost vectors. Ties go to the lowest action index."""

    smoothing: float = 0.0
    default_action: int = 0
    uniform_fallback: bool = False

    flip_rate = 0.0

    def train(self, dataset: Dataset) -> TabularModel:
        if len(dataset) == 0:
            raise DatasetError("cannot train on an empty dataset")
        S, A = dataset.num_states, dataset.num_actions
        observed = None
        if dataset.has_costs:
            scores, seen, observed = _cost_scores(dataset)
        else:
            counts = np.zeros((S, A))
            np.add.at(counts, (dataset.states, dataset.actions), 1.0)
            seen = counts.sum(axis=1) > 0
            sm = counts + self.smoothing
            scores = np.full((S, A), 1.0 / A)
            tot = sm.sum(axis=1, keepdims=True)
            scores[seen] = (sm / np.where(tot > 0, tot, 1.0))[seen]
        actions = np.full(S, self.default_action, dtype=np.int64)
        if seen.any():
            best = scores[seen].max(axis=1, keepdims=True)
            top = scores[seen] >= best - 1e-12
            if observed is not None:  # an observed action wins a tie with an unobserved one
                top_observed = top & observed[seen]
                top = np.where(top_observed.any(axis=1, keepdims=True), top_observed, top)
            actions[seen] = np.argmax(top, axis=1)
        if self.uniform_fallback and not seen.all():
            table = np.zeros((S, A))
            table[np.arange(S), actions] = 1.0
            table[~seen] = 1.0 / A
            policy = StochasticPolicy(table)
        else:
            policy = DeterministicPolicy(actions, A)
        return TabularModel(policy, scores, seen)


def _cost_scores(dataset: Dataset):
    """Negative mean observed cost per (s, a); unobserved pairs get the worst
    observed score at that state, unseen states a uniform 1/|A|. Also returns
    the seen-state mask and the (S, A) observed mask."""
    S, A = dataset.num_states, dataset.num_actions
    c = dataset.costs
    obs = ~np.isnan(c)
    sums = np.zeros((S, A))
    cnt = np.zeros((S, A))
    np.add.at(sums, dataset.states, np.where(obs, c, 0.0))
    np.add.at(cnt, dataset.states, obs.astype(float))
    seen = cnt.sum(axis=1) > 0
    scores = np.full((S, A), 1.0 / A)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = -sums / cnt
    for s in np.flatnonzero(seen):
        row = mean[s]
        known = cnt[s] > 0
        row = np.where(known, row, row[known].min())
        scores[s] = row
    return scores, seen, cnt > 0


@dataclass(frozen=True, eq=False)
class FlippedModel:
    inner: object
    policy: object

    def score(self, s: int, a: int) -> float:
        return self.inner.score(s, a)

    @property
    def scores(self):
        return self.inner.scores


@dataclass(frozen=True)
class ErrorInjectedLearner:
    """Wraps a learner so its trained policy disagrees with itself at rate
    exactly ``flip_rate`` in every state (flips go uniformly to the other actions)."""

    inner: TabularLearner = field(default_factory=TabularLearner)
    flip_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.flip_rate <= 1.0:
            raise ValueError("flip_rate must lie in [0, 1]")

    def train(self, dataset: Dataset) -> FlippedModel:
        model = self.inner.train(dataset)
        return FlippedModel(model, flip_policy(model.policy, self.flip_rate))


def make_learner(flip_rate: float = 0.0, **tabular) -> TabularLearner | ErrorInjectedLearner:
    base = TabularLearner(**tabular)
    return ErrorInjectedLearner(base, flip_rate) if flip_rate > 0 else base


def hypothesis_flip_rate(learner) -> float:
    return float(getattr(learner, "flip_rate", 0.0))


def train_tabular(dataset: Dataset, config: TabularLearner | None = None):
    return (config or TabularLearner()).train(dataset).policy


def learner_score(model, s: int, a: int) -> float:
    if model is None:
        raise ValueError("learner has not been trained")
    return model.score(s, a)


def pac_sample_size(eps: float, delta: float, num_states: int, num_actions: int) -> int:
    """Realisable finite-class bound (ln|Π| + ln 1/δ)/ε with |Π| = |A|^|S|."""
    return max(1, math.ceil((num_states * math.log(max(num_actions, 2)) + math.log(1.0 / delta)) / eps))


def sample_schedule(schedule: StateDistributionSchedule, n: int, rng: np.random.Generator):
    """Draw (step, state) pairs: step uniform in 1..T, state from d^t.

    The state marginal is the schedule's average distribution."""
    T = schedule.horizon
    u = rng.random((n, 2))
    steps = np.minimum((u[:, 0] * T).astype(np.int64), T - 1)
    cdf = cdf_rows(schedule.per_step)
    states = inverse_cdf(cdf[steps], u[:, 1])
    return steps + 1, states


def _check_schedule(schedule: StateDistributionSchedule) -> None:
    P = schedule.per_step
    if (P < 0).any() or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-10):
        raise ValueError("invalid state distribution")


def active_learn(
    eps_target: float,
    delta: float,
    dist: StateDistributionSchedule,
    expert,
    budget: int | None = None,
    rng_seed: int | tuple = 0,
    learner=None,
):
    """i.i.d. active learner: query the expert on ``budget`` states drawn from
    ``dist`` and train on the labels.

    ``budget=None`` uses :func:`pac_sample_size` for (eps_target, delta).
    ``rng_seed`` may be an int or a tuple of ints. Returns the trained
    policy; the oracle's query count grows by ``budget``.
    """
    _check_schedule(dist)
    S, A = expert.num_states, expert.num_actions
    if budget is None:
        budget = pac_sample_size(eps_target, delta, S, A)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    key = rng_seed if isinstance(rng_seed, tuple) else (rng_seed,)
    rng = rng_for(*key, stream_id("active_learn"))
    steps, states = sample_schedule(dist, budget, rng)
    labels = np.array([expert.query(int(s), int(t)) for s, t in zip(states, steps)], dtype=np.int64)
    data = Dataset(S, A, states, steps, labels, provenance="active_learn")
    return (learner or TabularLearner()).train(data).policy


def disagreement(policy, expert, horizon: int) -> np.ndarray:
    """(T, S) probability that ``policy`` picks a different action than the
    deterministic ``expert`` at (t, s)."""
    pt = step_tables(policy, horizon)
    et = step_tables(expert, horizon)
    return 1.0 - (pt * et).sum(axis=2)


def measured_eps(mdp: TabularMdp, policy, expert, dist: StateDistributionSchedule) -> float:
    """Exact expected 0-1 disagreement with ``expert`` under ``dist`` (averaged over steps)."""
    check_dims(mdp, policy)
    check_dims(mdp, expert)
    T = mdp.horizon
    if is_trajectory_mixture(policy):
        return float(sum(w * measured_eps(mdp, c, expert, dist) for c, w in zip(policy.components, policy.weights)))
    dis = disagreement(policy, expert, T)
    return float((dist.per_step * dis).sum() / T)
