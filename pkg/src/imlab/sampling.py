"""Seeded Monte-Carlo rollouts.

Each trajectory owns a counter-based Philox stream keyed by an integer tuple,
so trajectory ``i`` never depends on how many others were drawn before it.
Key ``(*prefix, j)`` selects the Philox key derived from ``prefix`` and a
counter offset proportional to ``j``; consecutive ``j`` therefore come out of
one contiguous draw. A trajectory consumes a fixed block of ``2 + 3T``
uniforms::

    u[0]          mixture component (trajectory-level)
    u[1]          initial state
    u[2 + 3k]     mixture component at step k+1 (per-step mixing only)
    u[3 + 3k]     action at step k+1
    u[4 + 3k]     next state after step k+1

and every draw is an inverse CDF over ascending state/action index.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .mdp import TabularMdp, Trajectory, check_dims
from .policies import DeterministicPolicy, MixturePolicy, cdf_rows, inverse_cdf


def stream_id(name: str) -> int:
    """Stable integer tag for a named random stream."""
    return zlib.crc32(name.encode())


def rng_for(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


@lru_cache(maxsize=4096)
def _philox_key(prefix: tuple) -> np.ndarray:
    return np.random.SeedSequence([int(k) for k in prefix] or [0]).generate_state(2, np.uint64)


def _rows(prefix: tuple, first: int, count: int, width: int) -> np.ndarray:
    blocks = -(-width // 4)  # Philox emits 4 words per counter step
    bitgen = np.random.Philox(key=_philox_key(prefix))
    if first:
        bitgen.advance(first * blocks)
    draw = np.random.Generator(bitgen).random(count * blocks * 4)
    return draw.reshape(count, blocks * 4)[:, :width]


def uniform_block(keys: Sequence[tuple], width: int) -> np.ndarray:
    """Row ``i`` holds the ``width`` uniforms of stream ``keys[i]``.

    Runs of keys sharing a prefix with consecutive last entries are drawn in
    one call; the values never depend on how the keys are grouped.
    """
    out = np.empty((len(keys), width))
    i = 0
    while i < len(keys):
        prefix, first = tuple(keys[i][:-1]), int(keys[i][-1])
        if first < 0:
            raise ValueError("stream index must be non-negative")
        j = i + 1
        while j < len(keys) and tuple(keys[j][:-1]) == prefix and int(keys[j][-1]) == first + (j - i):
            j += 1
        out[i:j] = _rows(prefix, first, j - i, width)
        i = j
    return out


@lru_cache(maxsize=64)
def _mdp_cdfs(mdp: TabularMdp):
    return cdf_rows(mdp.initial), cdf_rows(mdp.transition)


def mdp_cdfs(mdp: TabularMdp):
    """(initial CDF, transition CDF) pair, cached per MDP object."""
    return _mdp_cdfs(mdp)


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    states: np.ndarray  # (n, T)
    actions: np.ndarray  # (n, T)
    costs: np.ndarray  # (n, T)
    components: np.ndarray  # (n,) trajectory-level mixture component (0 if none)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def total_costs(self) -> np.ndarray:
        return self.costs.sum(axis=1)

    def trajectory(self, i: int) -> Trajectory:
        costs = tuple(float(c) for c in self.costs[i])
        return Trajectory(
            tuple(int(s) for s in self.states[i]),
            tuple(int(a) for a in self.actions[i]),
            costs,
            float(sum(costs)),
        )


class Actors:
    """A fixed list of policies; deterministic stationary members are served
    from one stacked lookup table instead of per-policy calls."""

    def __init__(self, actors: Sequence):
        self.actors = tuple(actors)
        det = [k for k, a in enumerate(self.actors) if isinstance(a, DeterministicPolicy)]
        self.row = np.full(len(self.actors), -1, dtype=np.int64)
        self.row[det] = np.arange(len(det))
        self.table = np.stack([self.actors[k].actions for k in det]) if det else None
        self.has_other = len(det) < len(self.actors)

    def act(self, which: np.ndarray, t: int, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        actions = np.empty(states.shape[0], dtype=np.int64)
        row = self.row[which]
        fast = row >= 0
        if self.table is not None:
            actions[fast] = self.table[row[fast], states[fast]]
        if self.has_other:
            for k in np.unique(which[~fast]):
                rows = which == k
                actions[rows] = self.actors[k].act(t, states[rows], u[rows])
        return actions


def act_grouped(actors, which: np.ndarray, t: int, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Actions for a batch where row ``i`` is played by ``actors[which[i]]``.

    Non-table actors are served in ascending index so query order is fixed.
    """
    if not isinstance(actors, Actors):
        actors = Actors(actors)
    return actors.act(which, t, states, u)


def simulate(mdp: TabularMdp, policy, U: np.ndarray) -> TrajectoryBatch:
    """Run ``policy`` on ``mdp`` for each row of uniforms ``U`` (shape (n, 2+3T))."""
    check_dims(mdp, policy)
    T = mdp.horizon
    n = U.shape[0]
    init_cdf, trans_cdf = mdp_cdfs(mdp)
    if isinstance(policy, MixturePolicy):
        actors = Actors(policy.components)
        which = policy.pick(U[:, 0])
    else:
        actors = Actors((policy,))
        which = np.zeros(n, dtype=np.int64)
    traj_which = which.copy()
    states = np.empty((n, T), dtype=np.int64)
    actions = np.empty((n, T), dtype=np.int64)
    costs = np.empty((n, T))
    s = inverse_cdf(init_cdf, U[:, 1]) if n else np.empty(0, dtype=np.int64)
    for k in range(T):
        t = k + 1
        if isinstance(policy, MixturePolicy) and policy.per_step:
            which = policy.pick(U[:, 2 + 3 * k])
        a = act_grouped(actors, which, t, s, U[:, 3 + 3 * k])
        states[:, k] = s
        actions[:, k] = a
        costs[:, k] = mdp.cost[s, a]
        s = inverse_cdf(trans_cdf[s, a], U[:, 4 + 3 * k])
    return TrajectoryBatch(states, actions, costs, traj_which)


def rollout_batch(mdp: TabularMdp, policy, keys: Iterable[tuple]) -> TrajectoryBatch:
    keys = list(keys)
    return simulate(mdp, policy, uniform_block(keys, 2 + 3 * mdp.horizon))


def rollout(mdp: TabularMdp, policy, rng_seed: int) -> Trajectory:
    """One T-step trajectory, reproducible from ``rng_seed`` alone."""
    return rollout_batch(mdp, policy, [(rng_seed,)]).trajectory(0)


def monte_carlo_cost(mdp: TabularMdp, policy, n_rollouts: int, rng_seed: int) -> tuple[float, float]:
    """Mean total cost over ``n_rollouts`` trajectories and its standard error.

    Rollout ``i`` uses stream ``(rng_seed, i)``. With one rollout the
    standard error is reported as 0.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    totals = rollout_batch(mdp, policy, [(rng_seed, i) for i in range(n_rollouts)]).total_costs
    mean = float(totals.mean())
    if n_rollouts == 1:
        return mean, 0.0
    return mean, float(totals.std(ddof=1) / np.sqrt(n_rollouts))
