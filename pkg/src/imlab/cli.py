"""Command-line experiment runner.

Subcommands: ``run`` (execute a TOML config), ``bounds`` (re-check stored
traces), ``compare`` (aggregate result CSVs), ``gen-env`` (write an MDP JSON)
and ``eval`` (exact cost of a stored policy).

Exit codes: 0 success, 1 a requested bound check failed, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io as _stdio
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import io
from .algorithms import ALGORITHMS, HyperparameterError, Hyperparameters, run_algorithm
from .analysis import bound_theorem, theorems_for
from .environments import FAMILIES, EnvSpec, make_env
from .expert import ExpertOracle, corrupt_expert, optimal_policy
from .learners import make_learner
from .mdp import exact_cost
from .sampling import monte_carlo_cost

CSV_HEADER = [
    "algo",
    "env",
    "T",
    "seed",
    "iter",
    "J_exact",
    "J_expert",
    "eps",
    "bound_id",
    "bound_rhs",
    "slack",
    "expert_queries",
    "dataset_size",
    "wall_ms",
]
HP_FIELDS = {f.name for f in dataclasses.fields(Hyperparameters)}
LEARNER_KEYS = {"flip_rate", "smoothing", "default_action", "uniform_fallback"}
RUN_KEYS = {"seeds", "out_dir", "jobs", "expert", "expert_error_rate", "timing"}
ENV_KEYS = {"family", "horizon", "params", "seed"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class AlgoConfig:
    name: str
    hp: dict = field(default_factory=dict)
    bounds: list[int] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    env: EnvSpec
    algos: list[AlgoConfig]
    seeds: list[int]
    learner: dict = field(default_factory=dict)
    out_dir: Path = Path("results")
    jobs: int = 1
    expert: str = "optimal"
    expert_error_rate: float = 0.0
    timing: bool = False


def fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _line_of(text: str, key: str, section: str | None = None, occurrence: int = 0) -> int | None:
    """Best-effort line number of ``key = ...`` inside the ``occurrence``-th
    ``[section]`` / ``[[section]]`` header, or anywhere if no section is given."""
    lines = text.splitlines()
    start, stop = 0, len(lines)
    if section is not None:
        heads = [i for i, ln in enumerate(lines) if re.match(rf"^\s*\[\[?\s*{re.escape(section)}\s*\]\]?\s*$", ln)]
        if occurrence < len(heads):
            start = heads[occurrence]
            if occurrence + 1 < len(heads):
                stop = heads[occurrence + 1]
    for i in range(start, stop):
        if re.match(rf"^\s*{re.escape(key)}\s*=", lines[i]) or re.match(rf"^\s*\[\[?\s*{re.escape(key)}\s*\]\]?", lines[i]):
            return i + 1
    return None


def _parse_value(raw: str):
    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        return raw


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key.path=value`` flags; list indices are numeric path parts."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        parts = path.strip().lstrip("-").split(".")
        node = data
        for p in parts[:-1]:
            if isinstance(node, list):
                node = node[int(p)]
            else:
                node = node.setdefault(p, {})
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = _parse_value(raw)
        else:
            node[last] = _parse_value(raw)
    return data


def parse_config(text: str, overrides: list[str] | None = None, out_dir: str | None = None) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed config: {exc}", int(m.group(1)) if m else None) from None
    apply_overrides(data, overrides or [])

    unknown = set(data) - {"env", "learner", "run", "algo"}
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown section {k!r}", _line_of(text, k))
    env = data.get("env")
    if not isinstance(env, dict):
        raise ConfigError("missing [env] section")
    for k in env:
        if k not in ENV_KEYS:
            raise ConfigError(f"unknown [env] key {k!r}", _line_of(text, k, "env"))
    family = env.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"env.family must be one of {FAMILIES}", _line_of(text, "family", "env"))
    horizon = env.get("horizon")
    if not isinstance(horizon, int) or horizon < 1:
        raise ConfigError("env.horizon must be a positive integer", _line_of(text, "horizon", "env"))
    spec = EnvSpec(family, horizon, dict(env.get("params", {})), int(env.get("seed", 0)))
    try:
        make_env(spec)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid environment: {exc}", _line_of(text, "params", "env") or _line_of(text, "env.params")) from None

    learner = data.get("learner", {})
    for k in learner:
        if k not in LEARNER_KEYS:
            raise ConfigError(f"unknown [learner] key {k!r}", _line_of(text, k, "learner"))
    flip = learner.get("flip_rate", 0.0)
    if not isinstance(flip, (int, float)) or not 0.0 <= flip <= 1.0:
        raise ConfigError("learner.flip_rate must lie in [0, 1]", _line_of(text, "flip_rate", "learner"))

    run = data.get("run", {})
    for k in run:
        if k not in RUN_KEYS:
            raise ConfigError(f"unknown [run] key {k!r}", _line_of(text, k, "run"))
    default_seed = int(os.environ.get("IMLAB_SEED", "0"))
    seeds = run.get("seeds", [default_seed])
    if isinstance(seeds, int):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("run.seeds must be a non-empty list of non-negative integers", _line_of(text, "seeds", "run"))
    jobs = run.get("jobs", 1)
    if not isinstance(jobs, int) or jobs < 1:
        raise ConfigError("run.jobs must be a positive integer", _line_of(text, "jobs", "run"))
    expert = run.get("expert", "optimal")
    if expert not in ("optimal", "corrupted"):
        raise ConfigError("run.expert must be 'optimal' or 'corrupted'", _line_of(text, "expert", "run"))

    algos_raw = data.get("algo")
    if not isinstance(algos_raw, list) or not algos_raw:
        raise ConfigError("at least one [[algo]] table is required")
    algos = []
    for n, entry in enumerate(algos_raw):
        name = entry.get("name")
        line = _line_of(text, "name", "algo", n)
        if name not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {name!r}; expected one of {sorted(ALGORITHMS)}", line)
        for k in entry:
            if k not in ("name", "hp", "bounds"):
                raise ConfigError(f"unknown [[algo]] key {k!r}", _line_of(text, k, "algo", n))
        hp = dict(entry.get("hp", {}))
        for k in hp:
            if k not in HP_FIELDS or k == "seed":
                raise ConfigError(f"unknown hyperparameter {k!r} for {name}", _line_of(text, k, "algo", n))
        try:
            Hyperparameters(**hp)
        except (HyperparameterError, TypeError) as exc:
            raise ConfigError(f"{name}: {exc}", _line_of(text, "hp", "algo", n)) from None
        bounds = entry.get("bounds", [])
        if not isinstance(bounds, list):
            raise ConfigError("bounds must be a list of theorem ids", _line_of(text, "bounds", "algo", n))
        valid = theorems_for(name)
        for b in bounds:
            if b not in valid:
                raise ConfigError(
                    f"theorem {b} does not apply to {name} (valid: {valid or 'none'})", _line_of(text, "bounds", "algo", n)
                )
        algos.append(AlgoConfig(name, hp, list(bounds)))

    return ExperimentConfig(
        env=spec,
        algos=algos,
        seeds=seeds,
        learner=dict(learner),
        out_dir=Path(out_dir or run.get("out_dir", "results")),
        jobs=jobs,
        expert=expert,
        expert_error_rate=float(run.get("expert_error_rate", 0.0)),
        timing=bool(run.get("timing", False)),
    )


def _run_cell(cfg: ExperimentConfig, algo: AlgoConfig, seed: int):
    """One (algorithm, seed) run: returns (csv rows, trace dict, report dicts)."""
    mdp = make_env(cfg.env)
    pstar = optimal_policy(mdp)
    if cfg.expert == "corrupted":
        oracle = corrupt_expert(pstar, cfg.expert_error_rate, seed)
    else:
        oracle = ExpertOracle(pstar)
    learner = make_learner(**cfg.learner)
    hp = Hyperparameters(**{**algo.hp, "seed": seed})
    start = time.perf_counter()
    policy, trace = run_algorithm(algo.name, mdp, oracle, learner, hp)
    wall_ms = (time.perf_counter() - start) * 1000.0 if cfg.timing else 0
    J_star = exact_cost(mdp, pstar)
    label, T = cfg.env.label(), mdp.horizon
    rows = []
    for r in trace.iterations:
        rows.append([algo.name, label, T, seed, r.iteration, r.J_exact, J_star, r.eps, "", "", "", r.expert_queries, r.dataset_size, wall_ms])
    J_final = exact_cost(mdp, policy)
    final_eps = next((r.eps for r in trace.iterations if r.policy_id == trace.final_policy), trace.iterations[-1].eps)
    last = trace.iterations[-1]
    reports = []
    for k in algo.bounds:
        rep = bound_theorem(k, mdp, pstar, trace)
        reports.append(rep)
        rows.append([algo.name, label, T, seed, "final", J_final, J_star, final_eps, k, rep.rhs, rep.slack, last.expert_queries, last.dataset_size, wall_ms])
    if not algo.bounds:
        rows.append([algo.name, label, T, seed, "final", J_final, J_star, final_eps, "", "", "", last.expert_queries, last.dataset_size, wall_ms])
    return rows, io.trace_to_dict(trace), [r.to_dict() for r in reports]


def run_experiment(cfg: ExperimentConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    io.save_mdp(out / "mdp.json", make_env(cfg.env))
    cells = [(a, s) for a in cfg.algos for s in cfg.seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_run_cell, cfg, a, s) for a, s in cells]
            results = [f.result() for f in futures]
    else:
        results = [_run_cell(cfg, a, s) for a, s in cells]

    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    failures = []
    for (algo, seed), (rows, trace, reports) in zip(cells, results):
        for row in rows:
            writer.writerow([fmt(x) if not isinstance(x, str) else x for x in row])
        io.write_json(out / "traces" / f"{algo.name}_seed{seed}.json", trace)
        for rep in reports:
            path = io.write_json(out / "bounds" / f"{algo.name}_seed{seed}_thm{rep['theorem']}.json", rep)
            if not rep["holds"]:
                failures.append(path)
    (out / "results.csv").write_text(buf.getvalue())
    for path in failures:
        print(f"bound violated: {path}", file=stdout)
    print(f"wrote {out / 'results.csv'} ({len(cells)} runs)", file=stdout)
    return 1 if failures else 0


def _read_csvs(paths: list[str]) -> list[dict]:
    rows = []
    for p in paths:
        with open(p, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != CSV_HEADER:
                raise ConfigError(f"{p}: CSV header does not match the results schema")
            rows.extend(dict(zip(header, r)) for r in reader)
    return rows


def compare_report(paths: list[str], out_dir: Path | None = None) -> tuple[list[dict], dict[str, Path]]:
    """Aggregate result CSVs. Returns per-algorithm summaries and the plot files written."""
    rows = _read_csvs(paths)
    finals: dict[str, dict] = {}
    for r in rows:
        if r["iter"] != "final":
            continue
        key = (r["algo"], r["env"], r["T"], r["seed"])
        finals.setdefault(key, r)  # one final value per run even with several bound rows
    by_algo: dict[str, list[dict]] = {}
    for (algo, *_), r in finals.items():
        by_algo.setdefault(algo, []).append(r)
    summary = []
    for algo in sorted(by_algo):
        rs = by_algo[algo]
        J = np.array([float(r["J_exact"]) for r in rs])
        regret = J - np.array([float(r["J_expert"]) for r in rs])
        q = np.array([float(r["expert_queries"]) for r in rs])
        summary.append(
            {
                "algo": algo,
                "runs": len(rs),
                "mean_J": float(J.mean()),
                "std_J": float(J.std()),
                "mean_regret": float(regret.mean()),
                "mean_queries": float(q.mean()),
            }
        )
    plots: dict[str, Path] = {}
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for algo in sorted(by_algo):
            per_iter: dict[int, list[float]] = {}
            for r in rows:
                if r["algo"] == algo and r["iter"] != "final":
                    per_iter.setdefault(int(r["iter"]), []).append(float(r["J_exact"]) - float(r["J_expert"]))
            path = out_dir / f"regret_vs_iteration_{algo}.dat"
            path.write_text("".join(f"{i} {fmt(np.mean(v))}\n" for i, v in sorted(per_iter.items())))
            plots[f"iteration:{algo}"] = path
            per_T: dict[int, list[float]] = {}
            for r in by_algo[algo]:
                per_T.setdefault(int(r["T"]), []).append(float(r["J_exact"]) - float(r["J_expert"]))
            path = out_dir / f"regret_vs_T_{algo}.dat"
            path.write_text("".join(f"{T} {fmt(np.mean(v))}\n" for T, v in sorted(per_T.items())))
            plots[f"T:{algo}"] = path
    return summary, plots


def _format_summary(summary: list[dict]) -> str:
    lines = [f"{'algo':<18} {'runs':>5} {'mean_J':>14} {'std_J':>14} {'mean_regret':>14} {'queries':>12}"]
    for s in summary:
        lines.append(
            f"{s['algo']:<18} {s['runs']:>5} {fmt(s['mean_J']):>14} {fmt(s['std_J']):>14} "
            f"{fmt(s['mean_regret']):>14} {fmt(s['mean_queries']):>12}"
        )
    return "\n".join(lines)


def _env_from_args(args) -> EnvSpec:
    params = {}
    for item in args.param or []:
        if "=" not in item:
            raise ConfigError(f"--param {item!r} is not of the form key=value")
        k, v = item.split("=", 1)
        params[k] = _parse_value(v)
    if args.family not in FAMILIES:
        raise ConfigError(f"--family must be one of {FAMILIES}")
    seed = args.seed if args.seed is not None else int(os.environ.get("IMLAB_SEED", "0"))
    return EnvSpec(args.family, args.horizon, params, seed)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="imlab", description="Tabular imitation-learning experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute an experiment config")
    p.add_argument("config")
    p.add_argument("--out-dir")

    p = sub.add_parser("bounds", help="re-check theorems on stored traces")
    p.add_argument("--mdp", required=True)
    p.add_argument("traces", nargs="+")
    p.add_argument("--theorem", type=int, action="append")
    p.add_argument("--out-dir")

    p = sub.add_parser("compare", help="aggregate result CSVs")
    p.add_argument("csvs", nargs="+")
    p.add_argument("--out-dir")

    p = sub.add_parser("gen-env", help="write an MDP JSON")
    p.add_argument("--family", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--param", action="append", help="family parameter key=value")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("eval", help="exact cost of a stored policy")
    p.add_argument("--mdp", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--rollouts", type=int, default=0, help="also report a Monte-Carlo estimate")
    p.add_argument("--seed", type=int)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # --key=value flags not known to argparse are config overrides for `run`
    known, extra = parser.parse_known_args(argv)
    try:
        if known.command == "run":
            bad = [e for e in extra if not (e.startswith("--") and "=" in e)]
            if bad:
                raise ConfigError(f"unrecognised arguments: {' '.join(bad)}")
            path = Path(known.config)
            if not path.exists():
                raise ConfigError(f"config file {path} not found")
            cfg = parse_config(path.read_text(), [e[2:] for e in extra], known.out_dir)
            return run_experiment(cfg)
        if extra:
            raise ConfigError(f"unrecognised arguments: {' '.join(extra)}")
        if known.command == "bounds":
            return _cmd_bounds(known)
        if known.command == "compare":
            summary, plots = compare_report(known.csvs, Path(known.out_dir) if known.out_dir else None)
            print(_format_summary(summary))
            for path in plots.values():
                print(f"plot data: {path}")
            return 0
        if known.command == "gen-env":
            spec = _env_from_args(known)
            try:
                mdp = make_env(spec)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            io.save_mdp(known.output, mdp)
            print(f"wrote {known.output} ({spec.label()}, |S|={mdp.num_states}, |A|={mdp.num_actions}, T={mdp.horizon})")
            return 0
        if known.command == "eval":
            mdp, policy = io.load_mdp(known.mdp), io.load_policy(known.policy)
            print(f"J_exact {fmt(exact_cost(mdp, policy))}")
            if known.rollouts > 0:
                seed = known.seed if known.seed is not None else int(os.environ.get("IMLAB_SEED", "0"))
                mean, se = monte_carlo_cost(mdp, policy, known.rollouts, seed)
                print(f"J_monte_carlo {fmt(mean)} std_error {fmt(se)}")
            return 0
    except (ConfigError, io.FormatError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


def _cmd_bounds(args) -> int:
    mdp = io.load_mdp(args.mdp)
    pstar = optimal_policy(mdp)
    failed = False
    for path in args.traces:
        trace = io.load_trace(path)
        ids = args.theorem or theorems_for(trace.algo)
        for k in ids:
            rep = bound_theorem(k, mdp, pstar, trace)
            d = rep.to_dict()
            print(f"{path} theorem {k}: lhs {fmt(rep.lhs)} rhs {fmt(rep.rhs)} slack {fmt(rep.slack)} holds {str(rep.holds).lower()}")
            if args.out_dir:
                io.write_json(Path(args.out_dir) / f"{Path(path).stem}_thm{k}.json", d)
            failed |= not rep.holds
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
