import math

import numpy as np
import pytest

from deqmcl.filters import BeliefSnapshot
from deqmcl.metrics import (
    StepError,
    belief_entropy,
    belief_variance,
    step_error,
    trial_rmse,
)
from deqmcl.worldsim import Pose


def snap(poses, weights=None, time=1, offset=0):
    poses = np.asarray(poses, dtype=float)
    if weights is None:
        weights = np.full(poses.shape[0], 1.0 / poses.shape[0])
    return BeliefSnapshot(time=time, offset=offset, poses=poses, weights=np.asarray(weights, float))


class TestStepError:
    def test_exact_belief_zero_error(self):
        truth = Pose(3.0, 4.0, 0.7)
        belief = snap([[3.0, 4.0, 0.7]] * 5)
        assert step_error(belief, truth).value == pytest.approx(0.0, abs=1e-12)

    def test_three_four_five(self):
        truth = Pose(0.0, 0.0, 1.2)
        belief = snap([[3.0, 4.0, 1.2]])
        assert step_error(belief, truth).value == pytest.approx(5.0, abs=1e-12)

    def test_opposite_heading_costs_two(self):
        truth = Pose(1.0, 2.0, 0.0)
        belief = snap([[1.0, 2.0, math.pi]])
        assert step_error(belief, truth).value == pytest.approx(2.0, abs=1e-12)

    def test_time_index_includes_offset(self):
        belief = snap([[0.0, 0.0, 0.0]], time=30, offset=-5)
        assert step_error(belief, Pose(0, 0, 0)).t == 25

    def test_invariant_under_permutation(self):
        rng = np.random.default_rng(0)
        poses = rng.uniform(-5, 5, (20, 3))
        w = rng.random(20)
        w /= w.sum()
        truth = Pose(1.0, -2.0, 0.3)
        perm = rng.permutation(20)
        a = step_error(snap(poses, w), truth).value
        b = step_error(snap(poses[perm], w[perm]), truth).value
        assert a == pytest.approx(b, abs=1e-12)

    def test_invariant_under_particle_split(self):
        poses = np.array([[1.0, 2.0, 0.5], [3.0, -1.0, -0.4]])
        w = np.array([0.6, 0.4])
        split_poses = np.array([[1.0, 2.0, 0.5], [1.0, 2.0, 0.5], [3.0, -1.0, -0.4]])
        split_w = np.array([0.3, 0.3, 0.4])
        truth = Pose(0, 0, 0)
        assert step_error(snap(poses, w), truth).value == pytest.approx(
            step_error(snap(split_poses, split_w), truth).value, abs=1e-12
        )

    def test_error_bound(self):
        rng = np.random.default_rng(1)
        dx, dy = 60.0, 40.0
        bound = math.sqrt(dx**2 + dy**2 + 8)
        for _ in range(50):
            poses = np.column_stack(
                [rng.uniform(0, dx, 10), rng.uniform(0, dy, 10), rng.uniform(-math.pi, math.pi, 10)]
            )
            truth = Pose(rng.uniform(0, dx), rng.uniform(0, dy), rng.uniform(-math.pi, math.pi))
            assert step_error(snap(poses), truth).value <= bound

    def test_empty_belief_rejected(self):
        with pytest.raises(ValueError):
            step_error(snap(np.empty((0, 3)), np.empty(0)), Pose(0, 0, 0))


class TestTrialRmse:
    def test_constant_errors(self):
        errors = [StepError(t, 5.0) for t in range(1, 101)]
        assert trial_rmse(errors) == 5.0

    def test_arithmetic_mean(self):
        assert trial_rmse([StepError(1, 0.0), StepError(2, 10.0)]) == 5.0

    def test_rms_mode(self):
        assert trial_rmse([0.0, 10.0], mode="rms") == pytest.approx(math.sqrt(50.0))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            trial_rmse([])

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            trial_rmse([1.0], mode="median")


class TestBeliefEntropy:
    def test_point_mass_zero(self):
        belief = snap([[10.0, 10.0, 0.0]] * 7)
        assert belief_entropy(belief, cell=5.0, n_heading_bins=36) == 0.0

    def test_uniform_over_k_bins(self):
        # four particles in four distinct position bins, equal weight
        poses = [[2.0, 2.0, 0.0], [12.0, 2.0, 0.0], [2.0, 12.0, 0.0], [12.0, 12.0, 0.0]]
        assert belief_entropy(snap(poses), cell=5.0, n_heading_bins=36) == pytest.approx(
            math.log(4), abs=1e-12
        )

    def test_coarsening_never_increases_entropy(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            poses = np.column_stack(
                [rng.uniform(0, 50, 200), rng.uniform(0, 50, 200), rng.uniform(-math.pi, math.pi, 200)]
            )
            w = rng.random(200)
            w /= w.sum()
            fine = belief_entropy(snap(poses, w), cell=2.5, n_heading_bins=36)
            coarse = belief_entropy(snap(poses, w), cell=5.0, n_heading_bins=18)
            assert coarse <= fine + 1e-12

    def test_nonnegative(self):
        rng = np.random.default_rng(3)
        poses = np.column_stack([rng.uniform(0, 9, 30), rng.uniform(0, 9, 30), rng.uniform(-3, 3, 30)])
        assert belief_entropy(snap(poses)) >= 0.0

    def test_heading_wrap_binning(self):
        # theta = pi sits in the last bin, just below the wrap point
        belief = snap([[0.0, 0.0, math.pi], [0.0, 0.0, -math.pi + 1e-9]])
        assert belief_entropy(belief, cell=5.0, n_heading_bins=4) == pytest.approx(math.log(2))


class TestBeliefVariance:
    def test_single_particle_all_zero(self):
        assert np.array_equal(belief_variance(snap([[4.0, 5.0, 1.0]])), np.zeros(4))

    def test_two_points_unit_variance(self):
        v = belief_variance(snap([[0.0, 3.0, 0.0], [2.0, 3.0, 0.0]]))
        assert v[0] == pytest.approx(1.0, abs=1e-12)
        assert v[1] == 0.0

    def test_cos_sin_variances_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            poses = np.column_stack(
                [rng.uniform(0, 10, 50), rng.uniform(0, 10, 50), rng.uniform(-math.pi, math.pi, 50)]
            )
            w = rng.random(50)
            w /= w.sum()
            v = belief_variance(snap(poses, w))
            assert v[2] <= 1.0 and v[3] <= 1.0
            assert np.all(v >= 0)

    def test_zero_iff_point_mass_per_coordinate(self):
        belief = snap([[1.0, 5.0, 0.3], [1.0, 7.0, 0.3]])
        v = belief_variance(belief)
        assert v[0] == 0.0 and v[2] == 0.0 and v[3] == 0.0
        assert v[1] > 0.0
