"""Bayesian hyperparameter meta-optimization for desk-scale RL agents.

The package tunes the hyperparameters of small reinforcement-learning
agents with Gaussian-process Bayesian optimization, optionally augmenting
the expected-improvement acquisition with short behavioural-cloning
rollouts from a store of demonstrations of the best policy found so far.
"""

from metatune.space import HyperparamDim, HyperparamSpace, BoundsError
from metatune.kernels import BACKEND

__all__ = ["HyperparamDim", "HyperparamSpace", "BoundsError", "BACKEND"]
__version__ = "0.1.0"
