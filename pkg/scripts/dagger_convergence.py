"""Per-iteration exact cost of DAgger on the gridworld, averaged over seeds.

    python scripts/dagger_convergence.py [--seeds 50] [--iterations 50] [--output dagger_convergence.dat]

Output columns: iteration, mean regret, standard deviation of regret.
"""

import argparse

import numpy as np

from imlab.algorithms import Hyperparameters, dagger
from imlab.environments import EnvSpec, make_env
from imlab.expert import ExpertOracle, optimal_policy
from imlab.learners import make_learner
from imlab.mdp import exact_cost

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--iterations", type=int, default=50)
    ap.add_argument("--rollouts", type=int, default=50)
    ap.add_argument("--output", default="dagger_convergence.dat")
    args = ap.parse_args()

    mdp = make_env(EnvSpec("gridworld", 12, {"width": 5, "height": 5, "slip": 0.1}))
    pstar = optimal_policy(mdp)
    J_star = exact_cost(mdp, pstar)
    curves = []
    for seed in range(args.seeds):
        hp = Hyperparameters(n_iter=args.iterations, rollouts_per_iter=args.rollouts, seed=seed)
        _, trace = dagger(mdp, ExpertOracle(pstar), make_learner(), hp)
        curves.append([r.J_exact - J_star for r in trace.iterations])
    curves = np.array(curves)
    with open(args.output, "w") as fh:
        for i, (m, s) in enumerate(zip(curves.mean(axis=0), curves.std(axis=0)), start=1):
            fh.write(f"{i} {m:.12g} {s:.12g}\n")
    print(f"wrote {args.output}; final mean regret {curves[:, -1].mean():.4g}")
