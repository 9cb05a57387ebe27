"""Run the four-way gridworld comparison and print the summary table.

    python scripts/gridworld_comparison.py [--jobs 4] [--out-dir results/gridworld_comparison]

Writes results.csv, per-run traces and the regret-vs-iteration plot data.
"""

import argparse
from pathlib import Path

from imlab.cli import main

HERE = Path(__file__).parent

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out-dir", default="results/gridworld_comparison")
    args = ap.parse_args()
    out = Path(args.out_dir)
    code = main(["run", str(HERE / "configs" / "gridworld_comparison.toml"), "--out-dir", str(out), f"--run.jobs={args.jobs}"])
    if code == 0:
        code = main(["compare", str(out / "results.csv"), "--out-dir", str(out / "plots")])
    raise SystemExit(code)
