"""Regret growth with the horizon on the cliff walk.

    python scripts/compounding.py [--flip 0.05] [--seeds 10] [--forward-rollouts 1000]

Prints the fitted exponent of regret in T for each algorithm and writes
``regret_vs_T_<algo>.dat`` (T, mean regret) for plotting.
"""

import argparse
from collections import defaultdict

import numpy as np

from imlab.analysis import compounding_fit

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--flip", type=float, default=0.05)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--horizons", type=int, nargs="+", default=[5, 10, 20, 40])
    ap.add_argument("--forward-rollouts", type=int, default=1000)
    args = ap.parse_args()

    settings = {
        "supervised_bc": {},
        "forward_training": {"rollouts_per_iter": args.forward_rollouts},
        "dagger": {},
    }
    for algo, hp in settings.items():
        fit = compounding_fit("cliffwalk", algo, args.horizons, args.flip, range(args.seeds), {"length": 25}, hp)
        by_T = defaultdict(list)
        for T, _, regret in fit.points:
            by_T[T].append(regret)
        with open(f"regret_vs_T_{algo}.dat", "w") as fh:
            for T in sorted(by_T):
                fh.write(f"{T} {np.mean(by_T[T]):.12g}\n")
        if fit.undefined:
            print(f"{algo:18s} slope undefined (fewer than two horizons with non-zero regret)")
        else:
            print(f"{algo:18s} slope {fit.slope:.3f} +/- {fit.stderr:.3f}")
