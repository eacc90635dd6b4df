import numpy as np
import pytest

from deqmcl.filters import FilterConfig
from deqmcl.gridmap import OccupancyGrid
from deqmcl.oracle import (
    DiscreteHmm,
    ImpossibleEvidenceError,
    LatticeSizeError,
    discretize,
    enumerate_queue_posterior,
    exact_queue_posterior,
    gaussian_initial,
    tv_distance,
    uniform_box_initial,
)
from deqmcl.worldsim import Action, BeamConfig, NoiseParams, Pose, sense

from conftest import make_room


def strip_grid(n_cells=6):
    """All-free 1D strip; the out-of-bounds boundary acts as the walls."""
    return OccupancyGrid(n_cells, 1, 1.0, np.zeros((1, n_cells), dtype=bool))


def strip_hmm(n_cells=6, sigma_v=0.5, beta=0.0, sensor_sigma=1.5):
    grid = strip_grid(n_cells)
    cfg = FilterConfig(
        n_particles=10,
        lag=2,
        beta=beta,
        motion_noise=NoiseParams(sigma_v, 0.0, 0.5),
        sensor_sigma=sensor_sigma,
        collision_step=0.5,
    )
    hmm = discretize(grid, cfg, [Action(1.0, 0.0), Action(-1.0, 0.0)], cell=1.0, n_heading_bins=1)
    return grid, cfg, hmm


def strip_scan(grid, x, rng_seed=0, sigma_range=0.3):
    beams = BeamConfig(headings=(0.0,), max_range=10.0, ray_step=0.1)
    return sense(grid, Pose(x, 0.5, 0.0), beams, NoiseParams(0, 0, sigma_range),
                 np.random.default_rng(rng_seed))


class TestDiscretize:
    def test_zero_noise_unit_mass_on_successor(self):
        grid, cfg, _ = strip_hmm()
        import dataclasses

        cfg0 = dataclasses.replace(cfg, motion_noise=NoiseParams(0, 0, 0))
        hmm = discretize(grid, cfg0, [Action(1.0, 0.0)], cell=1.0, n_heading_bins=1)
        trans = hmm.transitions[Action(1.0, 0.0)]
        for i in range(5):  # interior states step one cell right
            assert trans[i, i + 1] == 1.0
            assert trans[i].sum() == 1.0

    def test_rows_sum_to_one(self):
        _, _, hmm = strip_hmm(sigma_v=0.7)
        for trans in hmm.transitions.values():
            np.testing.assert_allclose(trans.sum(axis=1), 1.0, atol=1e-9)

    def test_mirrored_action_mirrors_rows(self):
        _, _, hmm = strip_hmm(sigma_v=0.5)
        fwd = hmm.transitions[Action(1.0, 0.0)]
        bwd = hmm.transitions[Action(-1.0, 0.0)]
        n = fwd.shape[0]
        np.testing.assert_allclose(fwd, bwd[::-1, ::-1], atol=1e-12)

    def test_lattice_size_refusal_reports_size(self):
        grid = make_room(200, 200)
        cfg = FilterConfig(n_particles=10)
        with pytest.raises(LatticeSizeError, match="40000"):
            discretize(grid, cfg, [Action(1, 0)], cell=1.0, n_heading_bins=1)

    def test_map_prior_folds_into_weighted_kernel(self):
        _, _, hmm = strip_hmm(sigma_v=0.5, beta=2.0)
        act = Action(1.0, 0.0)
        trans, weighted = hmm.transitions[act], hmm.weighted_transitions[act]
        assert np.all(weighted <= trans + 1e-15)
        # interior moves stay in free space: no penalty
        assert weighted[1, 2] == trans[1, 2]

    def test_emission_minus_inf_at_occupied_states(self):
        grid = make_room(8, 8)
        cfg = FilterConfig(n_particles=10, sensor_sigma=1.0)
        hmm = discretize(grid, cfg, [Action(1, 0)], cell=1.0, n_heading_bins=1)
        beams = BeamConfig(headings=(0.0,), max_range=10.0, ray_step=0.1)
        scan = sense(grid, Pose(4.0, 4.0, 0.0), beams, NoiseParams(0, 0, 0.3),
                     np.random.default_rng(0))
        log_e = hmm.log_emission(scan)
        assert np.all(log_e[~hmm.free] == -np.inf)
        assert np.all(np.isfinite(log_e[hmm.free]))


class TestExactQueuePosterior:
    def test_lag0_reduces_to_forward_filter(self):
        grid, cfg, hmm = strip_hmm(sigma_v=0.5, sensor_sigma=1.5)
        act = Action(1.0, 0.0)
        scans = [strip_scan(grid, 2.5, s) for s in range(3)]
        out = exact_queue_posterior(hmm, [act] * 3, [], scans, lag=0, t=4)
        assert set(out) == {0}
        # independent forward algorithm written inline
        msg = hmm.initial.copy()
        g = hmm.weighted_transitions[act]
        for scan in scans:
            log_e = hmm.log_emission(scan)
            e = np.exp(log_e - log_e.max())
            msg = (g.T @ msg) * e
            msg /= msg.sum()
        np.testing.assert_allclose(out[0], msg, atol=1e-12)

    def test_uninformative_emission_smoothing_equals_filtering(self, monkeypatch):
        grid, cfg, hmm = strip_hmm(sigma_v=0.5, beta=0.0)
        monkeypatch.setattr(DiscreteHmm, "log_emission", lambda self, scan: np.zeros(self.n_states))
        act = Action(1.0, 0.0)
        out = exact_queue_posterior(hmm, [act] * 3, [act] * 2, [None] * 3, lag=2, t=4)
        # with constant emission and no map prior the backward pass is flat:
        # every past/current marginal equals the plain forward marginal
        msg = hmm.initial.copy()
        g = hmm.transitions[act]
        forward = {1: msg}
        for j in range(2, 7):
            msg = g.T @ msg
            msg = msg / msg.sum()
            forward[j] = msg
        for k in range(-2, 3):
            np.testing.assert_allclose(out[k], forward[4 + k], atol=1e-12)

    def test_future_offsets_beta0_are_chapman_kolmogorov(self):
        grid, cfg, hmm = strip_hmm(sigma_v=0.5, beta=0.0)
        act = Action(1.0, 0.0)
        scans = [strip_scan(grid, 2.5, s) for s in range(3)]
        out = exact_queue_posterior(hmm, [act] * 3, [act] * 4, scans, lag=2, t=4)
        g = hmm.transitions[act]
        prop1 = g.T @ out[0]
        prop2 = g.T @ prop1
        np.testing.assert_allclose(out[1], prop1 / prop1.sum(), atol=1e-12)
        np.testing.assert_allclose(out[2], prop2 / prop2.sum(), atol=1e-12)

    def test_hand_computed_tiny_chain(self):
        # 3-step chain on a 4-cell strip, computed inline by explicit sums
        grid = strip_grid(4)
        cfg = FilterConfig(n_particles=10, lag=1, beta=1.0,
                           motion_noise=NoiseParams(0.6, 0.0, 0.5),
                           sensor_sigma=1.0, collision_step=0.5)
        act = Action(1.0, 0.0)
        hmm = discretize(grid, cfg, [act], cell=1.0, n_heading_bins=1)
        scans = [strip_scan(grid, 1.5, 7), strip_scan(grid, 2.5, 8)]
        out = exact_queue_posterior(hmm, [act] * 2, [act], scans, lag=1, t=3)

        g = hmm.weighted_transitions[act]
        e = {}
        for j, scan in zip((2, 3), scans):
            log_e = hmm.log_emission(scan)
            e[j] = np.exp(log_e - log_e.max())
        pi = hmm.initial
        n = 4
        joint = np.zeros((n, n, n, n))  # times 1..4
        for x1 in range(n):
            for x2 in range(n):
                for x3 in range(n):
                    for x4 in range(n):
                        joint[x1, x2, x3, x4] = (
                            pi[x1]
                            * g[x1, x2] * e[2][x2]
                            * g[x2, x3] * e[3][x3]
                            * g[x3, x4]
                        )
        joint /= joint.sum()
        np.testing.assert_allclose(out[-1], joint.sum(axis=(0, 2, 3)), atol=1e-12)
        np.testing.assert_allclose(out[0], joint.sum(axis=(0, 1, 3)), atol=1e-12)
        np.testing.assert_allclose(out[1], joint.sum(axis=(0, 1, 2)), atol=1e-12)

    def test_matches_enumeration_on_random_instances(self):
        act = Action(1.0, 0.0)
        for seed in range(5):
            grid, cfg, hmm = strip_hmm(sigma_v=0.6, beta=1.5, sensor_sigma=1.2)
            scans = [strip_scan(grid, 1.5 + 0.8 * j, 50 + 10 * seed + j) for j in range(3)]
            fb = exact_queue_posterior(hmm, [act] * 3, [act], scans, lag=2, t=4)
            brute = enumerate_queue_posterior(hmm, [act] * 3, [act], scans, lag=2, t=4)
            assert set(fb) == set(brute)
            for k in fb:
                assert abs(fb[k].sum() - 1.0) < 1e-9
                np.testing.assert_allclose(fb[k], brute[k], atol=1e-10)

    def test_impossible_evidence_raises(self, monkeypatch):
        grid, cfg, hmm = strip_hmm()
        monkeypatch.setattr(
            DiscreteHmm, "log_emission", lambda self, scan: np.full(self.n_states, -np.inf)
        )
        with pytest.raises(ImpossibleEvidenceError):
            exact_queue_posterior(hmm, [Action(1, 0)], [], [None], lag=0, t=2)

    def test_argument_length_validation(self):
        _, _, hmm = strip_hmm()
        with pytest.raises(ValueError):
            exact_queue_posterior(hmm, [Action(1, 0)], [], [], lag=0, t=2)

    def test_enumeration_guards_size(self):
        _, _, hmm = strip_hmm()
        with pytest.raises(LatticeSizeError):
            enumerate_queue_posterior(hmm, [Action(1, 0)] * 19, [], [None] * 19, lag=0, t=20,
                                      max_tuples=1000)


class TestValidationPlumbing:
    def test_tv_distance(self):
        assert tv_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0
        assert tv_distance(np.array([0.5, 0.5]), np.array([0.5, 0.5])) == 0.0
        assert tv_distance(np.array([0.7, 0.3]), np.array([0.3, 0.7])) == pytest.approx(0.4)

    def test_uniform_box_initial_covers_expected_cells(self):
        _, _, hmm = strip_hmm()
        init = uniform_box_initial(hmm, (1.0, 3.0, 0.0, 1.0, 0.0, 0.0))
        assert init.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(init[1:3], 0.5, atol=1e-12)
        assert init[0] == 0.0 and init[3:].sum() == 0.0

    def test_gaussian_initial_normalized_and_centered(self):
        _, _, hmm = strip_hmm(n_cells=9)
        init = gaussian_initial(hmm, Pose(4.5, 0.5, 0.0), sigma_xy=1.0, sigma_theta=0.2)
        assert init.sum() == pytest.approx(1.0, abs=1e-12)
        assert init.argmax() == 4

    def test_bin_belief_drops_off_lattice_mass(self):
        from deqmcl.filters import BeliefSnapshot
        from deqmcl.oracle import bin_belief

        _, _, hmm = strip_hmm()
        poses = np.array([[1.5, 0.5, 0.0], [100.0, 0.5, 0.0]])
        snap = BeliefSnapshot(time=1, offset=0, poses=poses, weights=np.array([0.5, 0.5]))
        binned = bin_belief(hmm, snap)
        assert binned.sum() == pytest.approx(0.5)
        assert binned[1] == pytest.approx(0.5)
