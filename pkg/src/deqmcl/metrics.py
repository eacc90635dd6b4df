"""Evaluation metrics: per-step estimation error, its aggregate, and the
entropy and per-dimension variance of a particle belief.

The state for error purposes is the 4-vector (x, y, cos theta, sin theta);
angle averages use the weighted mean of cos and sin directly, matching the
per-dimension variance reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .filters import BeliefSnapshot
from .worldsim import Pose

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class StepError:
    """Estimation error e_t for one time step (mixed world-unit/cos-sin units)."""

    t: int
    value: float


@dataclass(frozen=True)
class TrialMetrics:
    """Per-trial aggregates; per-step errors are retained for cross-trial SDs."""

    rmse: float
    step_errors: np.ndarray
    entropy: float
    variance: np.ndarray  # (var_x, var_y, var_cos, var_sin)


def mean_state(belief: BeliefSnapshot) -> np.ndarray:
    """Weighted mean of (x, y, cos theta, sin theta) over the particles."""
    if belief.poses.shape[0] == 0:
        raise ValueError("belief holds no particles")
    w = belief.weights
    feats = np.column_stack(
        [
            belief.poses[:, 0],
            belief.poses[:, 1],
            np.cos(belief.poses[:, 2]),
            np.sin(belief.poses[:, 2]),
        ]
    )
    return feats.T @ w


def error_from_mean(mean: np.ndarray, truth: Pose) -> float:
    """Euclidean distance between a 4-vector state mean and the true state."""
    ref = np.array([truth.x, truth.y, math.cos(truth.theta), math.sin(truth.theta)])
    return float(np.sqrt(np.sum((np.asarray(mean, float) - ref) ** 2)))


def step_error(belief: BeliefSnapshot, truth: Pose) -> StepError:
    """e_t: distance between the belief's mean state and the true state."""
    return StepError(t=belief.time + belief.offset, value=error_from_mean(mean_state(belief), truth))


def trial_rmse(errors, mode: str = "mean") -> float:
    """Aggregate per-step errors over a trial.

    ``mode="mean"`` averages e_t (each e_t is already a root of summed
    squares); ``mode="rms"`` takes sqrt(mean(e_t^2)) instead, kept for
    sensitivity checks.
    """
    values = np.array([e.value if isinstance(e, StepError) else float(e) for e in errors])
    if values.size == 0:
        raise ValueError("no step errors to aggregate")
    if mode == "mean":
        return float(values.mean())
    if mode == "rms":
        return float(np.sqrt(np.mean(values**2)))
    raise ValueError(f"unknown aggregation mode {mode!r}")


def belief_entropy(belief: BeliefSnapshot, cell: float = 5.0, n_heading_bins: int = 36) -> float:
    """Plug-in histogram entropy (nats) of the belief over (x, y, theta) bins."""
    if cell <= 0 or n_heading_bins < 1:
        raise ValueError("cell must be positive and n_heading_bins >= 1")
    if belief.poses.shape[0] == 0:
        raise ValueError("belief holds no particles")
    ix = np.floor(belief.poses[:, 0] / cell).astype(np.int64)
    iy = np.floor(belief.poses[:, 1] / cell).astype(np.int64)
    width = TWO_PI / n_heading_bins
    ib = np.minimum(
        ((belief.poses[:, 2] + math.pi) / width).astype(np.int64), n_heading_bins - 1
    )
    keys = np.column_stack([ix, iy, ib])
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    p = np.bincount(inverse, weights=belief.weights)
    p = p[p > 0]
    p = p / p.sum()
    return float(-(p * np.log(p)).sum())


def belief_variance(belief: BeliefSnapshot) -> np.ndarray:
    """Weighted variance of each of x, y, cos theta, sin theta."""
    if belief.poses.shape[0] == 0:
        raise ValueError("belief holds no particles")
    w = belief.weights
    feats = np.column_stack(
        [
            belief.poses[:, 0],
            belief.poses[:, 1],
            np.cos(belief.poses[:, 2]),
            np.sin(belief.poses[:, 2]),
        ]
    )
    mean = feats.T @ w
    return ((feats - mean) ** 2).T @ w
