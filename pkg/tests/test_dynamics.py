import json

import numpy as np
import pytest

from dsrtopo import dynamics as dyn
from dsrtopo.errors import DegenerateDataError, DivergenceError, InvalidArgumentError


def lorenz63_spec():
    return dyn.system_preset("lorenz63")[0]


class TestVectorField:
    def test_lorenz63_origin_is_fixed_point(self):
        f = dyn.vector_field(lorenz63_spec(), np.zeros(3))
        assert np.array_equal(f, np.zeros(3))

    def test_lorenz96_uniform_forcing_state_is_fixed_point(self):
        spec = dyn.SystemSpec("lorenz96", {"forcing": 8.0}, dt=0.04, state_dim=5)
        f = dyn.vector_field(spec, np.full(5, 8.0))
        assert np.array_equal(f, np.zeros(5))

    def test_rossler_origin(self):
        spec = dyn.SystemSpec("rossler", {"a": 0.2, "b": 0.2, "c": 5.7}, 0.08, 3)
        f = dyn.vector_field(spec, np.zeros(3))
        # hand evaluation: (-y-z, x+ay, b+z(x-c)) at 0 is (0, 0, b)
        assert np.allclose(f, [0.0, 0.0, 0.2], atol=1e-15)

    def test_bursting_gates_at_limit_values(self):
        spec = dyn.system_preset("bursting_neuron")[0]
        v = spec.params["v_h_m"]
        _, n_inf, h_inf = dyn.bursting_gates(v, spec.params)
        f = dyn.vector_field(spec, np.array([v, h_inf, n_inf]))
        assert f[1] == 0.0 and f[2] == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            dyn.vector_field(lorenz63_spec(), np.zeros(4))

    def test_lorenz96_cyclic_symmetry(self):
        spec = dyn.SystemSpec("lorenz96", {"forcing": 8.0}, dt=0.04, state_dim=6)
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = rng.normal(0, 2, 6)
            f = dyn.vector_field(spec, x)
            for shift in range(1, 6):
                f_rot = dyn.vector_field(spec, np.roll(x, shift))
                assert np.allclose(f_rot, np.roll(f, shift), atol=1e-14)


class TestRk4:
    def test_fixed_point_constant_trajectory(self):
        traj = dyn.integrate_rk4(lorenz63_spec(), np.zeros(3), 50)
        assert traj.data.shape == (51, 3)
        assert np.array_equal(traj.data, np.zeros((51, 3)))

    def test_row0_is_x0(self):
        x0 = np.array([1.0, 1.0, 1.0])
        traj = dyn.integrate_rk4(lorenz63_spec(), x0, 5)
        assert np.array_equal(traj.data[0], x0)

    @staticmethod
    def _oscillator(x):
        return np.array([x[1], -x[0]])

    def test_harmonic_oscillator_period(self):
        # closed-form solution: x(t) = cos(t), v(t) = -sin(t)
        dt = 0.01
        n = round(2 * np.pi / dt)
        path = dyn.rk4_path(self._oscillator, np.array([1.0, 0.0]), dt, n)
        t_end = n * dt
        exact = np.array([np.cos(t_end), -np.sin(t_end)])
        assert np.abs(path[-1] - exact).max() < 1e-6

    def test_rk4_order(self):
        # halving dt should shrink the final-state error about 16-fold
        errors = []
        for dt in (0.02, 0.01):
            n = round(4.0 / dt)
            path = dyn.rk4_path(self._oscillator, np.array([1.0, 0.0]), dt, n)
            exact = np.array([np.cos(4.0), -np.sin(4.0)])
            errors.append(np.abs(path[-1] - exact).max())
        ratio = errors[0] / errors[1]
        assert 12.0 <= ratio <= 20.0

    def test_lorenz_attractor_bounds(self):
        traj = dyn.integrate_rk4(lorenz63_spec(), np.array([1.0, 1.0, 1.0]), 100_000)
        x, y, z = traj.data[:, 0], traj.data[:, 1], traj.data[:, 2]
        assert np.abs(x).max() < 25 and np.abs(y).max() < 35
        assert z.min() > 0 and z.max() < 55

    def test_divergence_carries_last_valid_index(self):
        def blowup(x):
            return x**3

        with pytest.raises(DivergenceError) as err:
            dyn.rk4_path(blowup, np.array([2.0]), 1.0, 100)
        assert err.value.last_valid_index >= 0


class TestMakeDataset:
    def test_standardization_exact(self, lorenz_dataset_clean):
        data = lorenz_dataset_clean.series.data
        assert np.abs(data.mean(axis=0)).max() < 1e-9
        assert np.abs(data.std(axis=0) - 1.0).max() < 1e-9

    def test_determinism(self):
        traj = dyn.integrate_rk4(lorenz63_spec(), np.array([1.0, 1.0, 1.0]), 500)
        a = dyn.make_dataset(traj, 0.05, seed=7)
        b = dyn.make_dataset(traj, 0.05, seed=7)
        assert np.array_equal(a.series.data, b.series.data)

    def test_lorenz63_preset_noise_level(self):
        _, noise = dyn.system_preset("lorenz63")
        assert noise == 0.05

    def test_degenerate_dimension_rejected(self):
        data = np.column_stack([np.arange(100.0), np.full(100, 3.0)])
        traj = dyn.Trajectory(data=data, dt=1.0)
        with pytest.raises(DegenerateDataError):
            dyn.make_dataset(traj, 0.0, seed=0)

    def test_destandardize_inverse(self, lorenz_dataset_clean):
        spec, _ = dyn.system_preset("lorenz63")
        traj = dyn.simulate_system(spec, n_steps=20_000)
        ds = lorenz_dataset_clean
        recovered = ds.destandardize(ds.series.data)
        assert np.abs(recovered - traj.data).max() < 1e-9


class TestPreprocess:
    def test_impulse_yields_kernel_shape(self):
        raw = np.zeros(401)
        raw[200] = 1.0
        smoothed = dyn.smooth_series(raw, sigma=6.0, window=49)
        kernel = dyn.gaussian_kernel(6.0, 49)
        # direct convolution oracle: the impulse reproduces the kernel
        center = 200 - 49 // 2
        assert np.allclose(smoothed[center : center + 49], kernel, atol=1e-15)
        assert abs(smoothed.sum() - raw.sum()) < 1e-12

    def test_identity_embedding(self):
        rng = np.random.default_rng(5)
        raw = np.cumsum(rng.normal(size=400))
        ds = dyn.preprocess_timeseries(raw, 6.0, 49, embed_dim=1, lag=1)
        smoothed = dyn.smooth_series(raw, 6.0, 49)
        expected, _, _ = dyn.standardize(smoothed[:, None])
        assert np.allclose(ds.series.data, expected, atol=1e-12)

    def test_constant_series_degenerate(self):
        with pytest.raises(DegenerateDataError):
            dyn.preprocess_timeseries(np.full(400, 2.0), 6.0, 49, 1, 1)

    def test_too_short_series(self):
        with pytest.raises(InvalidArgumentError):
            dyn.preprocess_timeseries(np.arange(50.0), 6.0, 49, 5, 10)

    def test_embedding_columns_are_lagged(self):
        raw = np.arange(500.0) + np.sin(np.arange(500.0))
        ds = dyn.preprocess_timeseries(raw, 1.0, 5, embed_dim=3, lag=7)
        assert ds.series.data.shape[1] == 3


class TestIo:
    def test_dataset_round_trip(self, tmp_path):
        traj = dyn.integrate_rk4(lorenz63_spec(), np.array([1.0, 1.0, 1.0]), 300)
        ds = dyn.make_dataset(traj, 0.05, seed=11)
        path = tmp_path / "data.csv"
        dyn.save_dataset(ds, path)
        loaded = dyn.load_dataset(path)
        assert np.array_equal(loaded.series.data, ds.series.data)
        assert loaded.seed == ds.seed and loaded.noise_pct == ds.noise_pct
        assert np.array_equal(loaded.per_dim_mean, ds.per_dim_mean)

    def test_save_is_deterministic(self, tmp_path):
        traj = dyn.integrate_rk4(lorenz63_spec(), np.array([1.0, 1.0, 1.0]), 100)
        ds = dyn.make_dataset(traj, 0.02, seed=3)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        dyn.save_dataset(ds, p1)
        dyn.save_dataset(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert json.loads(p1.with_suffix(".json").read_text())["noise_pct"] == 0.02

    def test_load_raw_series(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("1.5\n2.5\n-3.0\n")
        assert np.array_equal(dyn.load_raw_series(path), [1.5, 2.5, -3.0])
