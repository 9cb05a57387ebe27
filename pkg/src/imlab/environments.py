"""Seeded generators for the desk-scale environment families."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .mdp import TabularMdp
from .sampling import rng_for, stream_id

NORTH, EAST, SOUTH, WEST = range(4)
_MOVES = {NORTH: (0, -1), EAST: (1, 0), SOUTH: (0, 1), WEST: (-1, 0)}
_PERP = {NORTH: (WEST, EAST), SOUTH: (WEST, EAST), EAST: (NORTH, SOUTH), WEST: (NORTH, SOUTH)}

ADVANCE, FALL = 0, 1  # cliff-walk actions; FALL doubles as "climb" off the corridor


def build_gridworld(
    width: int,
    height: int,
    goal: tuple[int, int] | None = None,
    slip: float = 0.0,
    T: int = 10,
    start: tuple[int, int] = (0, 0),
    step_cost: float = 1.0,
) -> TabularMdp:
    """Four-action grid (N, E, S, W) with an absorbing zero-cost goal.

    State index is ``y * width + x``. A move slips to each perpendicular
    direction with probability ``slip / 2``; moves into a wall stay put.
    Every non-goal state costs ``step_cost`` per step.
    """
    if goal is None:
        goal = (width - 1, height - 1)
    gx, gy = goal
    if not (0 <= gx < width and 0 <= gy < height):
        raise ValueError(f"goal {goal} outside {width}x{height} grid")
    if not 0.0 <= slip < 1.0:
        raise ValueError("slip must lie in [0, 1)")
    S = width * height
    P = np.zeros((S, 4, S))
    C = np.full((S, 4), float(step_cost))
    goal_s = gy * width + gx

    def target(x, y, d):
        dx, dy = _MOVES[d]
        nx, ny = x + dx, y + dy
        if 0 <= nx < width and 0 <= ny < height:
            return ny * width + nx
        return y * width + x

    for y in range(height):
        for x in range(width):
            s = y * width + x
            if s == goal_s:
                P[s, :, s] = 1.0
                C[s] = 0.0
                continue
            for a in range(4):
                P[s, a, target(x, y, a)] += 1.0 - slip
                for p in _PERP[a]:
                    P[s, a, target(x, y, p)] += slip / 2
    I = np.zeros(S)
    I[start[1] * width + start[0]] = 1.0
    return TabularMdp(P, C, I, T).check()


def build_cliffwalk(length: int, fall_cost: float = 1.0, T: int = 10) -> TabularMdp:
    """Corridor with a lane underneath that the naive learner cannot leave.

    States ``0..L-1`` are the corridor, ``L..2L-1`` a ledge and ``2L..3L-1``
    the bottom of the cliff, each indexed by position. In the corridor ADVANCE
    moves one step right (the last cell loops) and FALL drops to the bottom.
    Off the corridor, FALL climbs one level (bottom -> ledge -> corridor at
    the same position) while ADVANCE drops or stays at the bottom. Corridor
    steps cost 0; ledge and bottom steps cost ``fall_cost``.
    """
    if length < 2:
        raise ValueError("length must be >= 2")
    if not 0.0 < fall_cost <= 1.0:
        raise ValueError("fall_cost must lie in (0, 1]")
    L = length
    S = 3 * L
    P = np.zeros((S, 2, S))
    C = np.zeros((S, 2))
    for i in range(L):
        corridor, ledge, bottom = i, L + i, 2 * L + i
        P[corridor, ADVANCE, min(i + 1, L - 1)] = 1.0
        P[corridor, FALL, bottom] = 1.0
        P[ledge, ADVANCE, bottom] = 1.0
        P[ledge, FALL, corridor] = 1.0
        P[bottom, ADVANCE, bottom] = 1.0
        P[bottom, FALL, ledge] = 1.0
        C[ledge] = fall_cost
        C[bottom] = fall_cost
    I = np.zeros(S)
    I[0] = 1.0
    return TabularMdp(P, C, I, T).check()


def build_random_mdp(num_states: int, num_actions: int, density: float, seed: int, T: int) -> TabularMdp:
    """Random MDP with ``ceil(density * |S|)`` successors per (s, a), uniform
    [0, 1] costs and a full-support initial distribution."""
    if not 0.0 < density <= 1.0:
        raise ValueError("density must lie in (0, 1]")
    k = math.ceil(density * num_states - 1e-9)
    if k < 1:
        raise ValueError("density * num_states must be >= 1")
    rng = rng_for(seed, stream_id("random_mdp"))
    S, A = num_states, num_actions
    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            succ = np.sort(rng.choice(S, size=k, replace=False))
            w = 1.0 - rng.random(k)
            P[s, a, succ] = w / w.sum()
    C = rng.random((S, A))
    w0 = 1.0 - rng.random(S)
    return TabularMdp(P, C, w0 / w0.sum(), T).check()


@dataclass(frozen=True)
class EnvSpec:
    family: str
    horizon: int
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def label(self) -> str:
        keys = sorted(self.params)
        inner = ",".join(f"{k}={self.params[k]}" for k in keys)
        return f"{self.family}({inner})"


FAMILIES = ("gridworld", "cliffwalk", "random")


def make_env(spec: EnvSpec) -> TabularMdp:
    p = dict(spec.params)
    if spec.family == "gridworld":
        goal = p.pop("goal", None)
        mdp = build_gridworld(
            int(p.pop("width", 5)),
            int(p.pop("height", 5)),
            tuple(goal) if goal is not None else None,
            float(p.pop("slip", 0.0)),
            spec.horizon,
            tuple(p.pop("start", (0, 0))),
            float(p.pop("step_cost", 1.0)),
        )
    elif spec.family == "cliffwalk":
        mdp = build_cliffwalk(int(p.pop("length", 25)), float(p.pop("fall_cost", 1.0)), spec.horizon)
    elif spec.family == "random":
        mdp = build_random_mdp(
            int(p.pop("num_states", 5)),
            int(p.pop("num_actions", 2)),
            float(p.pop("density", 1.0)),
            spec.seed,
            spec.horizon,
        )
    else:
        raise ValueError(f"unknown environment family {spec.family!r}; expected one of {FAMILIES}")
    if p:
        raise ValueError(f"unknown {spec.family} parameters: {sorted(p)}")
    return mdp
