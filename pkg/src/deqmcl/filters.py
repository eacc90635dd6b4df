"""Particle-filter localizers over a known occupancy grid.

Four estimators share one vectorized machinery:

* ``mcl_step``            -- plain Monte-Carlo localization,
* ``mcl_map_motion_step`` -- MCL whose motion update is multiplied by a
                             traversability prior exp(-beta * C) on the moved
                             segment (C = collision sample count),
* ``mcl_smoother_step``   -- MCL carrying the last ``lag`` poses per particle
                             so the lagged marginal is the fixed-lag smoothed
                             belief,
* ``deq_init``/``deq_step`` -- the queue filter: each particle is a joint
                             trajectory over the window [t-lag, t+lag], with
                             planned future actions rolled out ahead of time
                             and every predicted transition weighted by the
                             traversability prior, so infeasible futures feed
                             back into the present and past belief.

All weights live in log domain.  Every step consumes its random stream in a
fixed documented order (per-particle v noise block, then omega noise block,
then at most one uniform for resampling), which makes the reduction
identities (queue filter with lag 0 on an empty map == plain MCL, and so on)
hold exactly, not just in distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gridmap import OccupancyGrid
from .worldsim import Action, ActionPlan, DepthScan, NoiseParams, Pose, normalize_angles

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

InitSampler = Callable[[np.random.Generator, int], np.ndarray]


class FilterDegeneracyError(RuntimeError):
    """All particle weights vanished; the caller decides how to recover."""


class InitializationError(RuntimeError):
    """The initial belief sampler produced no usable particles."""


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 1000
    lag: int = 0
    beta: float = 0.0
    motion_noise: NoiseParams = field(default_factory=NoiseParams)
    sensor_sigma: float = 2.0
    resample_threshold: float = 0.5
    collision_step: float = 1.0
    replan_on_divergence: bool = False
    resimulate_future: bool = False

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be >= 1, got {self.n_particles}")
        if self.lag < 0:
            raise ValueError(f"lag must be >= 0, got {self.lag}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.sensor_sigma <= 0:
            raise ValueError(f"sensor_sigma must be > 0, got {self.sensor_sigma}")
        if not 0.0 <= self.resample_threshold <= 1.0:
            raise ValueError(f"resample_threshold must be in [0, 1], got {self.resample_threshold}")
        if self.collision_step <= 0:
            raise ValueError(f"collision_step must be > 0, got {self.collision_step}")


@dataclass(frozen=True)
class BeliefSnapshot:
    """Weighted particle cloud for the pose at ``time + offset``."""

    time: int
    offset: int
    poses: np.ndarray    # (n, 3)
    weights: np.ndarray  # (n,), sums to 1

    def __post_init__(self):
        if self.poses.ndim != 2 or self.poses.shape[1] != 3:
            raise ValueError(f"poses must have shape (n, 3), got {self.poses.shape}")
        if self.weights.shape != (self.poses.shape[0],):
            raise ValueError("weights must match the particle count")


@dataclass(frozen=True)
class QueueParticle:
    """One joint trajectory hypothesis with its log importance weight."""

    trajectory: np.ndarray  # (span, 3)
    log_weight: float


@dataclass
class QueueState:
    """Particle approximation of the joint belief over a sliding time window.

    ``poses[:, n_past]`` is the current-time marginal; columns before it hold
    past states (oldest first) and columns after it hold predicted future
    states.  Plain MCL is the degenerate case n_past == n_future == 0.
    """

    t: int
    n_past: int
    n_future: int
    poses: np.ndarray        # (n, n_past + 1 + n_future, 3)
    log_weights: np.ndarray  # (n,)

    def __post_init__(self):
        span = self.n_past + 1 + self.n_future
        if self.poses.ndim != 3 or self.poses.shape[1] != span or self.poses.shape[2] != 3:
            raise ValueError(f"poses shape {self.poses.shape} does not match span {span}")
        if self.log_weights.shape != (self.poses.shape[0],):
            raise ValueError("log_weights must match the particle count")

    @property
    def n_particles(self) -> int:
        return self.poses.shape[0]

    def current(self) -> np.ndarray:
        return self.poses[:, self.n_past]

    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        return w / w.sum()

    def marginal(self, offset: int) -> BeliefSnapshot:
        if not -self.n_past <= offset <= self.n_future:
            raise ValueError(
                f"offset {offset} outside queue span [-{self.n_past}, +{self.n_future}]"
            )
        return BeliefSnapshot(
            time=self.t,
            offset=offset,
            poses=self.poses[:, self.n_past + offset].copy(),
            weights=self.weights(),
        )

    def particles(self) -> list[QueueParticle]:
        return [
            QueueParticle(trajectory=self.poses[i].copy(), log_weight=float(self.log_weights[i]))
            for i in range(self.n_particles)
        ]


def queue_marginal(state: QueueState, offset: int) -> BeliefSnapshot:
    """Weighted particle cloud of the pose at ``offset`` steps from now."""
    return state.marginal(offset)


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def motion_sample_batch(
    poses: np.ndarray, action: Action, noise: NoiseParams, rng: np.random.Generator
) -> np.ndarray:
    """Propagate an (n, 3) pose array through the noisy unicycle kernel.

    Draw order: n standard normals for the v perturbations, then n for omega.
    """
    n = poses.shape[0]
    dv = rng.standard_normal(n) * noise.sigma_v
    domega = rng.standard_normal(n) * noise.sigma_omega
    theta = normalize_angles(poses[:, 2] + action.omega + domega)
    out = np.empty_like(poses)
    v = action.v + dv
    out[:, 0] = poses[:, 0] + v * np.cos(theta)
    out[:, 1] = poses[:, 1] + v * np.sin(theta)
    out[:, 2] = theta
    return out


def motion_sample(pose: Pose, action: Action, noise: NoiseParams, rng: np.random.Generator) -> Pose:
    """Single-pose counterpart of `motion_sample_batch` (same draw order)."""
    arr = motion_sample_batch(pose.as_array()[None, :], action, noise, rng)
    return Pose(float(arr[0, 0]), float(arr[0, 1]), float(arr[0, 2]))


def observation_log_likelihood_batch(
    scan: DepthScan, poses: np.ndarray, grid: OccupancyGrid, sensor_sigma: float
) -> np.ndarray:
    """Per-pose log p(scan | pose, map): independent Gaussian beams.

    Each beam contributes the log density of (observed - predicted) range at
    std ``sensor_sigma``, with the prediction raycast from the pose using the
    scan's own sensor geometry.  Poses inside obstacles get -inf.
    """
    if sensor_sigma <= 0:
        raise ValueError(f"sensor_sigma must be > 0, got {sensor_sigma}")
    n = poses.shape[0]
    out = np.full(n, -np.inf)
    free = ~grid.occupied_xy(poses[:, 0], poses[:, 1])
    if not free.any():
        return out
    fp = poses[free]
    n_beams = scan.ranges.size
    xs = np.repeat(fp[:, 0], n_beams)
    ys = np.repeat(fp[:, 1], n_beams)
    ths = (fp[:, 2][:, None] + scan.beam_headings[None, :]).ravel()
    pred = grid.raycast_batch(xs, ys, ths, scan.max_range, scan.ray_step).reshape(-1, n_beams)
    resid = scan.ranges[None, :] - pred
    out[free] = -0.5 * np.sum((resid / sensor_sigma) ** 2, axis=1) - n_beams * (
        math.log(sensor_sigma) + LOG_SQRT_2PI
    )
    return out


def observation_log_likelihood(
    scan: DepthScan, pose: Pose, grid: OccupancyGrid, sensor_sigma: float
) -> float:
    return float(
        observation_log_likelihood_batch(scan, pose.as_array()[None, :], grid, sensor_sigma)[0]
    )


def traversability_log_prior_batch(
    grid: OccupancyGrid, prev: np.ndarray, nxt: np.ndarray, beta: float, step: float
) -> np.ndarray:
    """log exp(-beta * C) for each motion segment, C = collision sample count."""
    counts = grid.segment_collision_counts(prev[:, 0], prev[:, 1], nxt[:, 0], nxt[:, 1], step)
    return -(beta * counts)


def traversability_log_prior(
    grid: OccupancyGrid, prev: Pose, nxt: Pose, beta: float, step: float = 1.0
) -> float:
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return -(beta * grid.segment_collision_count(prev.position, nxt.position, step))


def effective_sample_size(log_weights: np.ndarray) -> float:
    """1 / sum(w^2) of the normalized weights."""
    w = np.exp(log_weights - log_weights.max())
    w = w / w.sum()
    return float(1.0 / np.sum(w * w))


def systematic_resample(weights, rng: np.random.Generator, n_out: int | None = None) -> np.ndarray:
    """Systematic resampling: particle indices from one uniform offset and stride 1/n.

    Copy counts satisfy floor(n * w_i) <= count_i <= ceil(n * w_i).  Raises
    `FilterDegeneracyError` when all weights are zero.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1D array")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise FilterDegeneracyError("all resampling weights are zero")
    n = w.size if n_out is None else int(n_out)
    cum = np.cumsum(w / total)
    cum[-1] = 1.0
    u = (rng.random() + np.arange(n)) / n
    return np.searchsorted(cum, u, side="right").astype(np.int64)


# ---------------------------------------------------------------------------
# shared step plumbing
# ---------------------------------------------------------------------------

def _normalize_log_weights(log_weights: np.ndarray) -> np.ndarray:
    m = log_weights.max()
    if m == -np.inf:
        raise FilterDegeneracyError("all particle weights vanished")
    return log_weights - (m + math.log(np.exp(log_weights - m).sum()))


def _finish_step(
    poses: np.ndarray, log_weights: np.ndarray, cfg: FilterConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Normalize, then resample whole trajectories when ESS drops below threshold."""
    log_weights = _normalize_log_weights(log_weights)
    w = np.exp(log_weights)
    ess = 1.0 / np.sum(w * w)
    if ess < cfg.resample_threshold * w.size:
        idx = systematic_resample(w, rng)
        poses = poses[idx]
        log_weights = np.full(w.size, -math.log(w.size))
    return poses, log_weights


def init_belief(
    cfg: FilterConfig, init_sampler: InitSampler, grid: OccupancyGrid, rng: np.random.Generator
) -> QueueState:
    """Uniform-weight belief at time 1, drawn from the initial-belief sampler."""
    poses = np.array(init_sampler(rng, cfg.n_particles), dtype=float)
    if poses.shape != (cfg.n_particles, 3):
        raise InitializationError(f"init sampler returned shape {poses.shape}")
    poses[:, 2] = normalize_angles(poses[:, 2])
    if grid.occupied_xy(poses[:, 0], poses[:, 1]).all():
        raise InitializationError("every initial particle lies in occupied space")
    logw = np.full(cfg.n_particles, -math.log(cfg.n_particles))
    return QueueState(t=1, n_past=0, n_future=0, poses=poses[:, None, :], log_weights=logw)


# ---------------------------------------------------------------------------
# baseline filters
# ---------------------------------------------------------------------------

def mcl_step(
    state: QueueState,
    action: Action,
    scan: DepthScan,
    cfg: FilterConfig,
    grid: OccupancyGrid,
    rng: np.random.Generator,
) -> QueueState:
    """Plain MCL: propagate, weight by the scan likelihood, resample on low ESS."""
    moved = motion_sample_batch(state.current(), action, cfg.motion_noise, rng)
    obs = observation_log_likelihood_batch(scan, moved, grid, cfg.sensor_sigma)
    logw = state.log_weights + obs
    poses, logw = _finish_step(moved[:, None, :], logw, cfg, rng)
    return QueueState(t=state.t + 1, n_past=0, n_future=0, poses=poses, log_weights=logw)


def mcl_map_motion_step(
    state: QueueState,
    action: Action,
    scan: DepthScan,
    cfg: FilterConfig,
    grid: OccupancyGrid,
    rng: np.random.Generator,
) -> QueueState:
    """MCL with the motion kernel multiplied by the traversability prior."""
    cur = state.current()
    moved = motion_sample_batch(cur, action, cfg.motion_noise, rng)
    obs = observation_log_likelihood_batch(scan, moved, grid, cfg.sensor_sigma)
    prior = traversability_log_prior_batch(grid, cur, moved, cfg.beta, cfg.collision_step)
    logw = state.log_weights + obs + prior
    poses, logw = _finish_step(moved[:, None, :], logw, cfg, rng)
    return QueueState(t=state.t + 1, n_past=0, n_future=0, poses=poses, log_weights=logw)


def mcl_smoother_step(
    state: QueueState,
    action: Action,
    scan: DepthScan,
    cfg: FilterConfig,
    grid: OccupancyGrid,
    rng: np.random.Generator,
) -> QueueState:
    """MCL whose particles carry their last ``lag`` poses.

    Resampling copies histories atomically, so the marginal at offset -lag is
    the fixed-lag smoothed distribution of time t - lag.
    """
    moved = motion_sample_batch(state.current(), action, cfg.motion_noise, rng)
    traj = np.concatenate([state.poses[:, : state.n_past + 1], moved[:, None, :]], axis=1)
    if traj.shape[1] > cfg.lag + 1:
        traj = traj[:, 1:]
    obs = observation_log_likelihood_batch(scan, moved, grid, cfg.sensor_sigma)
    logw = state.log_weights + obs
    poses, logw = _finish_step(traj, logw, cfg, rng)
    return QueueState(
        t=state.t + 1, n_past=poses.shape[1] - 1, n_future=0, poses=poses, log_weights=logw
    )


# ---------------------------------------------------------------------------
# queue filter
# ---------------------------------------------------------------------------

def deq_init(
    cfg: FilterConfig,
    init_sampler: InitSampler,
    plan: ActionPlan,
    grid: OccupancyGrid,
    rng: np.random.Generator,
) -> QueueState:
    """Queue belief at time 1: initial poses rolled ``min(lag, T-1)`` steps ahead.

    The future side is sampled from the motion kernel under the planned
    actions (plan steps 2 .. 1+F) and each rolled transition multiplies the
    weight by the traversability prior.
    """
    base = init_belief(cfg, init_sampler, grid, rng)
    f_target = min(cfg.lag, plan.horizon - 1)
    if f_target == 0:
        return base
    cols = [base.poses[:, 0]]
    logw = base.log_weights
    for k in range(1, f_target + 1):
        nxt = motion_sample_batch(cols[-1], plan.action(1 + k), cfg.motion_noise, rng)
        logw = logw + traversability_log_prior_batch(
            grid, cols[-1], nxt, cfg.beta, cfg.collision_step
        )
        cols.append(nxt)
    logw = _normalize_log_weights(logw)
    return QueueState(
        t=1, n_past=0, n_future=f_target, poses=np.stack(cols, axis=1), log_weights=logw
    )


def deq_step(
    state: QueueState,
    t: int,
    action: Action,
    scan: DepthScan,
    plan: ActionPlan,
    cfg: FilterConfig,
    grid: OccupancyGrid,
    rng: np.random.Generator,
) -> QueueState:
    """Advance the queue filter from time t-1 to t.

    Per particle: drop the oldest pose once the past side holds ``lag``
    states (marginalization), promote the stored prediction for time t to the
    new current pose, extend the future side by one sampled pose while the
    plan lasts, then weight by the scan likelihood at the new current pose
    and by the traversability prior of the newly appended transition; finally
    normalize and resample whole queues when the ESS falls below threshold.

    The executed action is assumed to equal the planned one; when
    ``cfg.replan_on_divergence`` is set and it differs, the stored future
    side is discarded (its pending traversability factors are backed out) and
    re-simulated from the newly sampled current pose.  With
    ``cfg.resimulate_future`` the future side is re-proposed that way on
    every step, which keeps resampled duplicates from marching through
    identical stale predictions; both variants target the same posterior.
    """
    if t != state.t + 1:
        raise ValueError(f"deq_step expects t == {state.t + 1}, got {t}")
    planned = plan.action(t)
    n_past, n_future = state.n_past, state.n_future
    logw = state.log_weights
    f_target = min(cfg.lag, plan.horizon - t)

    if n_future == 0:
        # lag 0: no stored prediction, sample the new current pose directly
        prev = state.poses[:, n_past]
        cur = motion_sample_batch(prev, action, cfg.motion_noise, rng)
        cols = cur[:, None, :]
        seg = (prev, cur)
        n_past_new, n_future_new = 0, 0
    elif cfg.resimulate_future or (cfg.replan_on_divergence and action != planned):
        # back out the pending future factors, then rebuild the future side
        for k in range(1, n_future + 1):
            logw = logw - traversability_log_prior_batch(
                grid, state.poses[:, n_past + k - 1], state.poses[:, n_past + k],
                cfg.beta, cfg.collision_step,
            )
        cur = motion_sample_batch(state.poses[:, n_past], action, cfg.motion_noise, rng)
        logw = logw + traversability_log_prior_batch(
            grid, state.poses[:, n_past], cur, cfg.beta, cfg.collision_step
        )
        parts = [state.poses[:, : n_past + 1], cur[:, None, :]]
        prev = cur
        for k in range(1, f_target + 1):
            nxt = motion_sample_batch(prev, plan.action(t + k), cfg.motion_noise, rng)
            logw = logw + traversability_log_prior_batch(
                grid, prev, nxt, cfg.beta, cfg.collision_step
            )
            parts.append(nxt[:, None, :])
            prev = nxt
        cols = np.concatenate(parts, axis=1)
        n_past_new, n_future_new = n_past + 1, f_target
        if n_past_new > cfg.lag:
            cols = cols[:, 1:]
            n_past_new = cfg.lag
        seg = None
    else:
        cols = state.poses
        # (a) marginalize out the oldest state once the past side is full
        if n_past == cfg.lag:
            cols = cols[:, 1:]
            n_past_new = cfg.lag
        else:
            n_past_new = n_past + 1
        # (b) the pose predicted for time t becomes the new current pose
        n_future_new = n_future - 1
        seg = None
        # (c) extend the future side while planned actions remain
        if n_future_new < f_target:
            last = cols[:, -1]
            nxt = motion_sample_batch(last, plan.action(t + f_target), cfg.motion_noise, rng)
            cols = np.concatenate([cols, nxt[:, None, :]], axis=1)
            seg = (last, nxt)
            n_future_new = f_target
        cur = cols[:, n_past_new]

    # (d) weight by the current observation and the newly appended transition
    obs = observation_log_likelihood_batch(scan, cur, grid, cfg.sensor_sigma)
    if seg is not None:
        prior = traversability_log_prior_batch(grid, seg[0], seg[1], cfg.beta, cfg.collision_step)
        logw = logw + obs + prior
    else:
        logw = logw + obs
    # (e) normalize and resample whole queues
    poses, logw = _finish_step(cols, logw, cfg, rng)
    return QueueState(
        t=t, n_past=n_past_new, n_future=n_future_new, poses=poses, log_weights=logw
    )
