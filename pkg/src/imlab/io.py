"""JSON serialisation for MDPs, policies, datasets, run traces and bound reports.

Floats are written with ``repr`` precision, so every round trip is value-exact.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .algorithms import IterationRecord, RunTrace
from .analysis import BoundReport
from .learners import Dataset
from .mdp import TabularMdp
from .policies import DeterministicPolicy, MixturePolicy, NonStationaryPolicy, StochasticPolicy


class FormatError(ValueError):
    pass


def _plain(x: Any):
    """numpy scalars/arrays to builtin types; NaN to None."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if math.isnan(x) else x
    return x


def dumps(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True)


def mdp_to_dict(mdp: TabularMdp) -> dict:
    return {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "horizon": mdp.horizon,
        "initial": mdp.initial.tolist(),
        "cost": mdp.cost.tolist(),
        "transition": mdp.transition.tolist(),
    }


def mdp_from_dict(d: dict) -> TabularMdp:
    try:
        mdp = TabularMdp(
            np.array(d["transition"], dtype=np.float64),
            np.array(d["cost"], dtype=np.float64),
            np.array(d["initial"], dtype=np.float64),
            int(d["horizon"]),
        )
    except KeyError as exc:
        raise FormatError(f"MDP JSON is missing key {exc.args[0]!r}") from None
    if (mdp.num_states, mdp.num_actions) != (d.get("num_states", mdp.num_states), d.get("num_actions", mdp.num_actions)):
        raise FormatError("declared num_states/num_actions disagree with the tables")
    return mdp.check()


def policy_to_dict(policy) -> dict:
    if isinstance(policy, DeterministicPolicy):
        return {"kind": "deterministic", "num_actions": policy.num_actions, "actions": policy.actions.tolist()}
    if isinstance(policy, StochasticPolicy):
        return {"kind": "stochastic", "table": policy.table.tolist()}
    if isinstance(policy, NonStationaryPolicy):
        return {"kind": "nonstationary", "steps": [policy_to_dict(p) for p in policy.steps]}
    if isinstance(policy, MixturePolicy):
        return {
            "kind": "mixture",
            "per_step": policy.per_step,
            "weights": policy.weights.tolist(),
            "components": [policy_to_dict(c) for c in policy.components],
        }
    inner = getattr(policy, "policy", None)
    if inner is not None:
        return policy_to_dict(inner)
    raise FormatError(f"cannot serialise {type(policy).__name__}")


def policy_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "deterministic":
        return DeterministicPolicy(np.array(d["actions"], dtype=np.int64), int(d["num_actions"]))
    if kind == "stochastic":
        return StochasticPolicy(np.array(d["table"], dtype=np.float64))
    if kind == "nonstationary":
        return NonStationaryPolicy(tuple(policy_from_dict(p) for p in d["steps"]))
    if kind == "mixture":
        return MixturePolicy(
            tuple(policy_from_dict(c) for c in d["components"]),
            np.array(d["weights"], dtype=np.float64),
            bool(d.get("per_step", False)),
        )
    raise FormatError(f"unknown policy kind {kind!r}")


def dataset_to_dict(data: Dataset) -> dict:
    records = []
    for s, t, a, q in data.records():
        rec = {"s": s, "t": t, "a": a}
        if q is not None:
            rec["q"] = [None if math.isnan(x) else x for x in q]
        records.append(rec)
    return {
        "num_states": data.num_states,
        "num_actions": data.num_actions,
        "provenance": data.provenance,
        "has_costs": data.has_costs,
        "records": records,
    }


def dataset_from_dict(d: dict) -> Dataset:
    recs = d["records"]
    with_q = [("q" in r) for r in recs]
    if any(with_q) and not all(with_q):
        raise FormatError("cost vectors must be present on all records or none")
    costs = None
    if recs and all(with_q):
        costs = np.array([[np.nan if x is None else x for x in r["q"]] for r in recs], dtype=np.float64)
    elif not recs and d.get("has_costs"):
        costs = np.empty((0, int(d["num_actions"])))
    return Dataset(
        int(d["num_states"]),
        int(d["num_actions"]),
        [r["s"] for r in recs],
        [r["t"] for r in recs],
        [r["a"] for r in recs],
        costs,
        d.get("provenance", ""),
    )


def trace_to_dict(trace: RunTrace) -> dict:
    return {
        "algo": trace.algo,
        "hyperparameters": trace.hyperparameters,
        "learner": trace.learner,
        "expert_label": trace.expert_label,
        "iterations": [
            {
                "iteration": r.iteration,
                "policy_id": r.policy_id,
                "J_exact": r.J_exact,
                "eps": r.eps,
                "expert_queries": r.expert_queries,
                "dataset_size": r.dataset_size,
                "extras": r.extras,
            }
            for r in trace.iterations
        ],
        "final_policy": trace.final_policy,
        "policies": {k: policy_to_dict(p) for k, p in trace.policies.items()},
        "extras": trace.extras,
    }


def trace_from_dict(d: dict) -> RunTrace:
    trace = RunTrace(d["algo"], d["hyperparameters"], d["learner"], d["expert_label"])
    for r in d["iterations"]:
        trace.iterations.append(
            IterationRecord(
                r["iteration"], r["policy_id"], r["J_exact"], r["eps"], r["expert_queries"], r["dataset_size"], r.get("extras", {})
            )
        )
    trace.final_policy = d["final_policy"]
    trace.policies = {k: policy_from_dict(p) for k, p in d["policies"].items()}
    trace.extras = d.get("extras", {})
    return trace


def report_to_dict(report: BoundReport) -> dict:
    return report.to_dict()


def report_from_dict(d: dict) -> BoundReport:
    return BoundReport(
        d["theorem"], d["algo"], d["lhs"], d["rhs"], d["J_expert"], d["constituents"], d["distribution"], d.get("asserted", True)
    )


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    return path


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())


def save_mdp(path, mdp: TabularMdp) -> Path:
    return write_json(path, mdp_to_dict(mdp))


def load_mdp(path) -> TabularMdp:
    return mdp_from_dict(read_json(path))


def save_policy(path, policy) -> Path:
    return write_json(path, policy_to_dict(policy))


def load_policy(path):
    return policy_from_dict(read_json(path))


def save_trace(path, trace: RunTrace) -> Path:
    return write_json(path, trace_to_dict(trace))


def load_trace(path) -> RunTrace:
    return trace_from_dict(read_json(path))
