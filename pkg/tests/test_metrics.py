import math

import numpy as np
import pytest

from conftest import zeros_dataset
from dsrtopo import metrics as mt
from dsrtopo.dynamics import Trajectory
from dsrtopo.errors import DegenerateDataError, InvalidArgumentError, UnsupportedDimensionError
from dsrtopo.model import PlrnnParams, TopologyMask


class TestBinning:
    def test_matches_brute_force_double_loop(self):
        rng = np.random.default_rng(0)
        points = rng.uniform(-1, 3, (20, 2))
        k = 4
        edges = mt.bin_edges_from(points, k)
        hist = mt.bin_trajectory(points, edges)
        # brute force: nested loops over points and bins
        expected = np.zeros((k, k), dtype=int)
        for x, y in points:
            for i in range(k):
                lo_x, hi_x = edges[0][i], edges[0][i + 1]
                if (lo_x <= x < hi_x) or (i == k - 1 and x >= hi_x) or (i == 0 and x < lo_x):
                    break
            for j in range(k):
                lo_y, hi_y = edges[1][j], edges[1][j + 1]
                if (lo_y <= y < hi_y) or (j == k - 1 and y >= hi_y) or (j == 0 and y < lo_y):
                    break
            expected[i, j] += 1
        assert np.array_equal(hist.counts.reshape(k, k), expected)
        assert hist.counts.sum() == 20

    def test_out_of_range_points_clip_to_boundary_bins(self):
        base = np.array([[0.0, 0.0], [1.0, 1.0]])
        edges = mt.bin_edges_from(base, 4)
        hist = mt.bin_trajectory(np.array([[-100.0, 100.0]]), edges)
        grid = hist.counts.reshape(4, 4)
        assert grid[0, 3] == 1


class TestDstsp:
    def test_identical_is_exactly_zero(self, lorenz_dataset):
        traj = lorenz_dataset.series
        assert mt.d_stsp(traj, traj) == 0.0

    def test_two_bin_toy_value(self):
        # direct summation oracle: 0.5 ln 2 + 0.5 ln(2/3)
        expected = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
        assert abs(mt.kl_divergence([0.5, 0.5], [0.25, 0.75]) - expected) < 1e-12

    def test_row_shuffle_invariance(self, lorenz_dataset):
        rng = np.random.default_rng(1)
        true = lorenz_dataset.series
        gen = true.data[:5000] + rng.normal(0, 0.1, (5000, 3))
        shuffled = gen[rng.permutation(5000)]
        assert mt.d_stsp(true, gen) == mt.d_stsp(true, shuffled)

    def test_nonnegative(self, lorenz_dataset):
        rng = np.random.default_rng(2)
        true = lorenz_dataset.series
        for _ in range(5):
            gen = rng.normal(0, 1, (2000, 3))
            assert mt.d_stsp(true, gen) >= 0.0

    def test_stuck_orbit_scores_high(self, lorenz_dataset):
        true = lorenz_dataset.series
        stuck = np.tile(np.array([[0.1, 0.1, 0.1]]), (5000, 1))
        d = mt.d_stsp(true, stuck)
        # concentrated vs spread occupancy: above the reasonable-reconstruction
        # threshold (1.0). The Laplace regularization bounds the overall scale,
        # so this sits well below the diverged sentinel.
        assert d > 1.0
        assert d < mt.d_stsp_sentinel(3)

    def test_diverged_gets_sentinel(self, lorenz_dataset):
        true = lorenz_dataset.series
        gen = Trajectory(np.zeros((100, 3)), dt=0.01, diverged=True)
        assert mt.d_stsp(true, gen) == mt.d_stsp_sentinel(3)

    def test_unsupported_dimension(self):
        data = np.random.default_rng(0).normal(size=(100, 6))
        with pytest.raises(UnsupportedDimensionError):
            mt.d_stsp(data, data)

    def test_default_bins(self):
        assert mt.default_bins(3) == 30
        assert mt.default_bins(5) == 8


class TestPowerSpectrum:
    def test_sums_to_one(self):
        rng = np.random.default_rng(3)
        spec = mt.power_spectrum(rng.normal(size=4096))
        assert abs(spec.sum() - 1.0) < 1e-12
        assert np.all(spec >= 0)

    def test_sinusoid_peak_location(self):
        n, f = 2048, 100
        t = np.arange(n)
        series = np.sin(2 * np.pi * f * t / n)
        spec = mt.power_spectrum(series, smooth_sigma_bins=2.0)
        assert np.argmax(spec) == f

    def test_white_noise_spectrum_is_flat(self):
        rng = np.random.default_rng(4)
        spec = mt.power_spectrum(rng.normal(size=2**15), smooth_sigma_bins=20.0)
        entropy = -np.sum(spec[spec > 0] * np.log(spec[spec > 0]))
        assert entropy >= 0.9 * math.log(spec.size)

    def test_constant_series_rejected(self):
        with pytest.raises(DegenerateDataError):
            mt.power_spectrum(np.full(128, 2.0))

    def test_short_series_rejected(self):
        with pytest.raises(InvalidArgumentError):
            mt.power_spectrum(np.arange(32.0))


class TestHellinger:
    def test_identical_distributions(self):
        p = np.array([0.2, 0.3, 0.5])
        assert mt.hellinger_distance(p, p) == 0.0

    def test_disjoint_support_is_one(self):
        p = np.array([0.5, 0.5, 0.0, 0.0])
        q = np.array([0.0, 0.0, 0.5, 0.5])
        assert mt.hellinger_distance(p, q) == 1.0

    def test_identical_trajectories(self, lorenz_dataset):
        traj = lorenz_dataset.series
        short = Trajectory(traj.data[:4000], dt=traj.dt)
        assert mt.d_hellinger(short, short) == 0.0

    def test_separated_sinusoids_near_one(self):
        n = 4096
        t = np.arange(n)
        a = np.column_stack([np.sin(2 * np.pi * 30 * t / n)])
        b = np.column_stack([np.sin(2 * np.pi * 900 * t / n)])
        assert mt.d_hellinger(a, b, smooth_sigma_bins=2.0) >= 0.95

    def test_symmetric_and_bounded(self, lorenz_dataset):
        rng = np.random.default_rng(5)
        a = lorenz_dataset.series.data[:3000]
        b = rng.normal(0, 1, (3000, 3))
        d_ab = mt.d_hellinger(a, b)
        d_ba = mt.d_hellinger(b, a)
        assert abs(d_ab - d_ba) < 1e-12
        assert 0.0 <= d_ab <= 1.0

    def test_diverged_scores_one(self, lorenz_dataset):
        gen = Trajectory(np.zeros((100, 3)), dt=0.01, diverged=True)
        assert mt.d_hellinger(lorenz_dataset.series, gen) == 1.0

    def test_constant_generated_dimension_uses_degenerate_spectrum(self, lorenz_dataset):
        true = Trajectory(lorenz_dataset.series.data[:2000], dt=0.01)
        gen = true.data.copy()
        gen[:, 2] = 0.77
        d = mt.d_hellinger(true, gen)
        assert 0.0 < d <= 1.0


class TestPredError:
    def test_exact_replay_on_constant_dataset(self):
        ds = zeros_dataset(400, 3)
        m = 5
        p = PlrnnParams(np.zeros(m), np.zeros((m, m)), np.zeros(m), m, 3)
        assert mt.pred_error(p, TopologyMask.full(m), ds, 20) == 0.0

    def test_zero_predictor_on_standardized_data(self, lorenz_dataset_clean):
        # a model that always emits zero has MSE ~ Var = 1 per dimension
        m = 6
        p = PlrnnParams(np.zeros(m), np.zeros((m, m)), np.zeros(m), m, 3)
        mask = TopologyMask(np.zeros((m, m), dtype=np.uint8))
        err = mt.pred_error(p, mask, lorenz_dataset_clean, 20)
        assert abs(err - 1.0) < 0.05

    def test_default_horizon_is_20(self):
        assert mt.DEFAULT_PRED_STEPS == 20


class TestEvaluate:
    def test_diverged_model_gets_sentinels(self, lorenz_dataset):
        m = 4
        p = PlrnnParams(np.full(m, 2.0), np.zeros((m, m)), np.zeros(m), m, 3)
        report = mt.evaluate_model(
            p, TopologyMask.full(m), lorenz_dataset, n_gen=500, transient=100
        )
        assert report.diverged
        assert report.d_stsp == mt.d_stsp_sentinel(3)
        assert report.d_hellinger == 1.0

    def test_report_row_format(self):
        report = mt.EvalReport(0.5, 0.1, 0.25, 0.8, False)
        row = mt.format_report_row("run1", "geometric", report, 40)
        assert row.split(",")[0] == "run1"
        assert row.split(",")[-1] == "40"
        assert len(row.split(",")) == len(mt.RESULTS_HEADER.split(","))
