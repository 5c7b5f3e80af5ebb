"""Objective metrics that turn a meta-episode's evaluations into one score."""

from __future__ import annotations

from enum import Enum

import numpy as np


class MetricKind(str, Enum):
    MEAN_EVAL_REWARD = "mean_eval_reward"
    MAX_EVAL_REWARD = "max_eval_reward"
    BEST_EVAL_SCORE = "best_eval_score"


def _as_evaluations(traces) -> list[np.ndarray]:
    traces = list(traces)
    if traces and np.ndim(traces[0]) == 0:
        # a flat list of episode returns is a single evaluation
        return [np.asarray(traces, dtype=float)]
    return [np.asarray(t, dtype=float).reshape(-1) for t in traces]


def compute_metric(kind, evaluation_traces) -> float:
    """Score a list of evaluations, each an array of episode returns.

    ``mean_eval_reward`` averages every evaluation episode,
    ``max_eval_reward`` takes the single best episode, and
    ``best_eval_score`` takes the best per-evaluation mean.
    """
    kind = MetricKind(kind)
    evals = [e for e in _as_evaluations(evaluation_traces) if e.size]
    if not evals:
        raise ValueError("compute_metric needs at least one evaluation")
    if kind is MetricKind.MEAN_EVAL_REWARD:
        return float(np.concatenate(evals).mean())
    if kind is MetricKind.MAX_EVAL_REWARD:
        return float(max(e.max() for e in evals))
    return float(max(e.mean() for e in evals))
