"""Tabular imitation-learning laboratory: exact finite-horizon MDP evaluation,
the classic reductions of imitation to supervised and online learning, and
executable regret-bound checks."""

__version__ = "0.1.0"
