"""Exact fixed-lag smoothing and prediction on small discretized instances.

Used as ground truth for the particle filters: the continuous model is
discretized onto a pose lattice (cells x heading bins), the queue posterior
is computed exactly by forward-backward message passing over the window, and
filter marginals are compared against it in total-variation distance.  A
full-joint enumerator doubles as an independent check on the message passing
itself for very small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .filters import BeliefSnapshot, FilterConfig, observation_log_likelihood_batch
from .gridmap import OccupancyGrid
from .worldsim import Action, DepthScan, Pose, normalize_angle

TWO_PI = 2.0 * math.pi


class LatticeSizeError(ValueError):
    """The requested lattice is too large to enumerate."""


class ImpossibleEvidenceError(RuntimeError):
    """The observation sequence has zero probability under the discrete model."""


@dataclass
class DiscreteHmm:
    """Pose-lattice HMM mirroring the continuous localization model.

    ``transitions`` holds row-stochastic motion matrices per action;
    ``weighted_transitions`` additionally folds in the traversability prior
    exp(-beta * C) of the center-to-center segment, so its rows are
    sub-stochastic near obstacles.
    """

    grid: OccupancyGrid
    cell: float
    n_heading_bins: int
    nx: int
    ny: int
    centers: np.ndarray  # (S, 3)
    free: np.ndarray     # (S,) bool
    transitions: dict[Action, np.ndarray]
    weighted_transitions: dict[Action, np.ndarray]
    sensor_sigma: float
    initial: np.ndarray  # (S,)

    @property
    def n_states(self) -> int:
        return self.centers.shape[0]

    def state_index(self, ix: int, iy: int, ib: int) -> int:
        return (iy * self.nx + ix) * self.n_heading_bins + ib

    def pose_to_state(self, x: float, y: float, theta: float) -> int:
        """Lattice state containing the pose, or -1 when off-lattice."""
        ix = math.floor(x / self.cell)
        iy = math.floor(y / self.cell)
        if not (0 <= ix < self.nx and 0 <= iy < self.ny):
            return -1
        width = TWO_PI / self.n_heading_bins
        ib = min(int((normalize_angle(theta) + math.pi) / width), self.n_heading_bins - 1)
        return self.state_index(ix, iy, ib)

    def log_emission(self, scan: DepthScan) -> np.ndarray:
        return observation_log_likelihood_batch(scan, self.centers, self.grid, self.sensor_sigma)


def discretize(
    grid: OccupancyGrid,
    cfg: FilterConfig,
    actions: list[Action],
    cell: float,
    n_heading_bins: int,
    max_states: int = 10_000,
    quad_points: int = 61,
) -> DiscreteHmm:
    """Discretize the motion/observation model onto a pose lattice.

    Transition rows are built by composite-midpoint integration of the motion
    kernel: the heading noise is evaluated at destination-bin centers and the
    forward noise on a midpoint grid over +/- 6 sigma, each node mapped to
    the cell it lands in.  Rows are renormalized so they sum to exactly 1.
    """
    if cell <= 0:
        raise ValueError(f"cell must be positive, got {cell}")
    nx = math.ceil(grid.world_width / cell - 1e-9)
    ny = math.ceil(grid.world_height / cell - 1e-9)
    n_states = nx * ny * n_heading_bins
    if n_states > max_states:
        raise LatticeSizeError(
            f"{nx} x {ny} cells x {n_heading_bins} heading bins = {n_states} states "
            f"exceeds the enumerable limit of {max_states}"
        )

    ixs, iys = np.meshgrid(np.arange(nx), np.arange(ny))
    cell_x = (ixs.ravel() + 0.5) * cell
    cell_y = (iys.ravel() + 0.5) * cell
    bin_width = TWO_PI / n_heading_bins
    bin_centers = -math.pi + (np.arange(n_heading_bins) + 0.5) * bin_width

    centers = np.empty((n_states, 3))
    for ib in range(n_heading_bins):
        idx = np.arange(nx * ny) * n_heading_bins + ib
        centers[idx, 0] = cell_x
        centers[idx, 1] = cell_y
        centers[idx, 2] = bin_centers[ib]
    free = ~grid.occupied_xy(centers[:, 0], centers[:, 1])

    noise = cfg.motion_noise
    transitions: dict[Action, np.ndarray] = {}
    weighted: dict[Action, np.ndarray] = {}
    n_cells = nx * ny
    cell_state_base = np.arange(n_cells) * n_heading_bins

    for action in actions:
        # heading bins: midpoint density at destination-bin centers
        head = np.zeros((n_heading_bins, n_heading_bins))
        for ib in range(n_heading_bins):
            target = bin_centers[ib] + action.omega
            if noise.sigma_omega == 0:
                width = TWO_PI / n_heading_bins
                bt = min(int((normalize_angle(target) + math.pi) / width), n_heading_bins - 1)
                head[ib, bt] = 1.0
            else:
                diff = np.array([normalize_angle(c - target) for c in bin_centers])
                dens = np.exp(-0.5 * (diff / noise.sigma_omega) ** 2)
                head[ib] = dens / dens.sum()

        # forward displacement: midpoint quadrature over +/- 6 sigma
        if noise.sigma_v == 0:
            s_nodes = np.array([action.v])
            s_weights = np.array([1.0])
        else:
            z = -6.0 + (np.arange(quad_points) + 0.5) * 12.0 / quad_points
            s_nodes = action.v + noise.sigma_v * z
            s_weights = np.exp(-0.5 * z * z)
            s_weights = s_weights / s_weights.sum()

        trans = np.zeros((n_states, n_states))
        for ib in range(n_heading_bins):
            src = cell_state_base + ib
            for bt in range(n_heading_bins):
                hw = head[ib, bt]
                if hw == 0.0:
                    continue
                ct, st = math.cos(bin_centers[bt]), math.sin(bin_centers[bt])
                for s_val, s_w in zip(s_nodes, s_weights):
                    dst_ix = np.floor((cell_x + s_val * ct) / cell).astype(np.int64)
                    dst_iy = np.floor((cell_y + s_val * st) / cell).astype(np.int64)
                    ok = (dst_ix >= 0) & (dst_ix < nx) & (dst_iy >= 0) & (dst_iy < ny)
                    dst = (dst_iy[ok] * nx + dst_ix[ok]) * n_heading_bins + bt
                    np.add.at(trans, (src[ok], dst), hw * s_w)
        row_sums = trans.sum(axis=1)
        dead = row_sums == 0
        trans[dead, np.arange(n_states)[dead]] = 1.0  # all mass off-lattice: hold state
        row_sums[dead] = 1.0
        trans /= row_sums[:, None]
        transitions[action] = trans

        w = trans.copy()
        src_idx, dst_idx = np.nonzero(trans)
        counts = grid.segment_collision_counts(
            centers[src_idx, 0], centers[src_idx, 1],
            centers[dst_idx, 0], centers[dst_idx, 1],
            cfg.collision_step,
        )
        w[src_idx, dst_idx] *= np.exp(-cfg.beta * counts)
        weighted[action] = w

    initial = free.astype(float)
    initial /= initial.sum()
    return DiscreteHmm(
        grid=grid,
        cell=cell,
        n_heading_bins=n_heading_bins,
        nx=nx,
        ny=ny,
        centers=centers,
        free=free,
        transitions=transitions,
        weighted_transitions=weighted,
        sensor_sigma=cfg.sensor_sigma,
        initial=initial,
    )


def _emission_weights(hmm: DiscreteHmm, scan: DepthScan) -> np.ndarray:
    log_e = hmm.log_emission(scan)
    m = log_e.max()
    if m == -np.inf:
        raise ImpossibleEvidenceError("observation impossible at every lattice state")
    return np.exp(log_e - m)


def exact_queue_posterior(
    hmm: DiscreteHmm,
    executed: list[Action],
    planned: list[Action],
    observations: list[DepthScan],
    lag: int,
    t: int,
) -> dict[int, np.ndarray]:
    """Exact per-offset queue marginals p(x_{t+k} | actions, plan, o_{2:t}, map).

    ``executed`` and ``observations`` cover steps 2..t (the time-1 belief is
    the prior, matching the filters); ``planned`` covers steps t+1..T.
    Offsets k run over [-min(t-1, lag), +min(lag, T-t)].  Future transitions
    carry the traversability prior, so infeasible plans feed back into the
    current and past marginals exactly as in the queue filter.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if len(executed) != t - 1 or len(observations) != t - 1:
        raise ValueError(
            f"need t-1 = {t - 1} executed actions and observations, "
            f"got {len(executed)} and {len(observations)}"
        )
    horizon = t + len(planned)
    n_future = min(lag, horizon - t)
    n_past = min(t - 1, lag)

    def kernel(j: int) -> np.ndarray:
        act = executed[j - 2] if j <= t else planned[j - t - 1]
        return hmm.weighted_transitions[act]

    emission = {j: _emission_weights(hmm, observations[j - 2]) for j in range(2, t + 1)}

    alphas: dict[int, np.ndarray] = {}
    msg = hmm.initial / hmm.initial.sum()
    if 1 >= t - n_past:
        alphas[1] = msg
    for j in range(2, t + n_future + 1):
        msg = kernel(j).T @ msg
        if j <= t:
            msg = msg * emission[j]
        total = msg.sum()
        if not (total > 0 and np.isfinite(total)):
            raise ImpossibleEvidenceError(f"evidence has zero probability at step {j}")
        msg = msg / total
        if j >= t - n_past:
            alphas[j] = msg

    betas: dict[int, np.ndarray] = {t + n_future: np.ones(hmm.n_states)}
    for j in range(t + n_future - 1, t - n_past - 1, -1):
        incoming = betas[j + 1]
        if j + 1 <= t:
            incoming = incoming * emission[j + 1]
        b = kernel(j + 1) @ incoming
        peak = b.max()
        if not (peak > 0 and np.isfinite(peak)):
            raise ImpossibleEvidenceError(f"evidence has zero probability beyond step {j}")
        betas[j] = b / peak

    out: dict[int, np.ndarray] = {}
    for k in range(-n_past, n_future + 1):
        m = alphas[t + k] * betas[t + k]
        total = m.sum()
        if not (total > 0 and np.isfinite(total)):
            raise ImpossibleEvidenceError(f"zero-probability marginal at offset {k}")
        out[k] = m / total
    return out


def enumerate_queue_posterior(
    hmm: DiscreteHmm,
    executed: list[Action],
    planned: list[Action],
    observations: list[DepthScan],
    lag: int,
    t: int,
    max_tuples: int = 2_000_000,
) -> dict[int, np.ndarray]:
    """Brute-force joint enumeration over full trajectories, for tiny instances.

    Independent of the message-passing path; guards the oracle itself.
    """
    horizon = t + len(planned)
    n_future = min(lag, horizon - t)
    n_past = min(t - 1, lag)
    steps = t + n_future
    n_states = hmm.n_states
    if n_states ** steps > max_tuples:
        raise LatticeSizeError(f"{n_states}^{steps} trajectories exceed {max_tuples}")

    def kernel(j: int) -> np.ndarray:
        act = executed[j - 2] if j <= t else planned[j - t - 1]
        return hmm.weighted_transitions[act]

    emission = {j: _emission_weights(hmm, observations[j - 2]) for j in range(2, t + 1)}
    kernels = {j: kernel(j) for j in range(2, steps + 1)}
    marginals = {k: np.zeros(n_states) for k in range(-n_past, n_future + 1)}
    total = 0.0
    for traj in itertools.product(range(n_states), repeat=steps):
        w = hmm.initial[traj[0]]
        for j in range(2, steps + 1):
            if w == 0.0:
                break
            w *= kernels[j][traj[j - 2], traj[j - 1]]
            if j <= t:
                w *= emission[j][traj[j - 1]]
        else:
            if w > 0.0:
                total += w
                for k in range(-n_past, n_future + 1):
                    marginals[k][traj[t + k - 1]] += w
    if total <= 0:
        raise ImpossibleEvidenceError("evidence has zero probability under enumeration")
    return {k: m / total for k, m in marginals.items()}


# ---------------------------------------------------------------------------
# validation plumbing
# ---------------------------------------------------------------------------

def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance, 0.5 * L1."""
    return float(0.5 * np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def bin_belief(hmm: DiscreteHmm, snapshot: BeliefSnapshot) -> np.ndarray:
    """Histogram a particle belief onto the lattice; off-lattice mass is dropped."""
    ix = np.floor(snapshot.poses[:, 0] / hmm.cell).astype(np.int64)
    iy = np.floor(snapshot.poses[:, 1] / hmm.cell).astype(np.int64)
    width = TWO_PI / hmm.n_heading_bins
    theta = np.mod(snapshot.poses[:, 2], TWO_PI)
    theta = np.where(theta > math.pi, theta - TWO_PI, theta)
    ib = np.minimum(((theta + math.pi) / width).astype(np.int64), hmm.n_heading_bins - 1)
    valid = (ix >= 0) & (ix < hmm.nx) & (iy >= 0) & (iy < hmm.ny)
    idx = (iy[valid] * hmm.nx + ix[valid]) * hmm.n_heading_bins + ib[valid]
    return np.bincount(idx, weights=snapshot.weights[valid], minlength=hmm.n_states).astype(float)


def uniform_box_initial(hmm: DiscreteHmm, box: tuple[float, float, float, float, float, float]) -> np.ndarray:
    """Lattice distribution of a uniform box (xmin, xmax, ymin, ymax, thmin, thmax)."""
    xmin, xmax, ymin, ymax, thmin, thmax = box

    def overlap(lo: float, hi: float, centers: np.ndarray, width: float) -> np.ndarray:
        left = centers - width / 2
        right = centers + width / 2
        return np.clip(np.minimum(hi, right) - np.maximum(lo, left), 0.0, None)

    ox = overlap(xmin, xmax, hmm.centers[:, 0], hmm.cell)
    oy = overlap(ymin, ymax, hmm.centers[:, 1], hmm.cell)
    if thmax > thmin:
        oth = overlap(thmin, thmax, hmm.centers[:, 2], TWO_PI / hmm.n_heading_bins)
    else:  # degenerate box: a single heading value
        width = TWO_PI / hmm.n_heading_bins
        oth = (np.abs(hmm.centers[:, 2] - thmin) <= width / 2).astype(float)
    mass = ox * oy * oth
    total = mass.sum()
    if total <= 0:
        raise ValueError("uniform box does not overlap the lattice")
    return mass / total


def gaussian_initial(
    hmm: DiscreteHmm, mean: Pose, sigma_xy: float, sigma_theta: float
) -> np.ndarray:
    """Lattice distribution of the Gaussian initial belief around ``mean``."""

    def cdf(z: np.ndarray) -> np.ndarray:
        return 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))

    half = hmm.cell / 2
    cx, cy, cth = hmm.centers[:, 0], hmm.centers[:, 1], hmm.centers[:, 2]
    px = cdf((cx + half - mean.x) / sigma_xy) - cdf((cx - half - mean.x) / sigma_xy)
    py = cdf((cy + half - mean.y) / sigma_xy) - cdf((cy - half - mean.y) / sigma_xy)
    diff = np.array([normalize_angle(c - mean.theta) for c in cth])
    pth = np.exp(-0.5 * (diff / sigma_theta) ** 2)
    mass = px * py * pth
    total = mass.sum()
    if total <= 0:
        raise ValueError("gaussian initial belief has no mass on the lattice")
    return mass / total
