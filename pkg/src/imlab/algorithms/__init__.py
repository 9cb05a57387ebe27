from ._common import HyperparameterError, Hyperparameters, IterationRecord, RunTrace, beta_schedule
from .aggregation import aggrevate, coaching_cost, dagger, hope_actions, sample_cost_to_go
from .mixing import UnmixError, searn, smile, smile_weights, unmix
from .rail import rail
from .supervised import forward_training, supervised_bc

ALGORITHMS = {
    "supervised_bc": supervised_bc,
    "forward_training": forward_training,
    "searn": searn,
    "smile": smile,
    "rail": rail,
    "dagger": dagger,
    "dagger_coaching": lambda mdp, expert, learner, hp: dagger(mdp, expert, learner, hp, coaching=True),
    "aggrevate": aggrevate,
}


def run_algorithm(name: str, mdp, expert, learner, hp: Hyperparameters):
    try:
        fn = ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; expected one of {sorted(ALGORITHMS)}") from None
    return fn(mdp, expert, learner, hp)


__all__ = [
    "ALGORITHMS",
    "HyperparameterError",
    "Hyperparameters",
    "IterationRecord",
    "RunTrace",
    "UnmixError",
    "aggrevate",
    "beta_schedule",
    "coaching_cost",
    "dagger",
    "forward_training",
    "hope_actions",
    "rail",
    "run_algorithm",
    "sample_cost_to_go",
    "searn",
    "smile",
    "smile_weights",
    "supervised_bc",
    "unmix",
]
