import numpy as np
import pytest

from dsrtopo import dynamics as dyn


@pytest.fixture(scope="session")
def lorenz_dataset():
    """Mid-sized standardized Lorenz-63 dataset shared across test modules."""
    spec, noise = dyn.system_preset("lorenz63")
    traj = dyn.simulate_system(spec, n_steps=20_000)
    return dyn.make_dataset(traj, noise, seed=101)


@pytest.fixture(scope="session")
def lorenz_dataset_clean():
    """Noise-free variant for exactness checks."""
    spec, _ = dyn.system_preset("lorenz63")
    traj = dyn.simulate_system(spec, n_steps=20_000)
    return dyn.make_dataset(traj, 0.0, seed=101)


def zeros_dataset(t_len=500, n_dims=3):
    """A dataset whose series is identically zero (fixed point at the origin)."""
    series = dyn.Trajectory(data=np.zeros((t_len, n_dims)), dt=1.0, meta="zeros")
    return dyn.Dataset(
        series=series,
        per_dim_mean=np.zeros(n_dims),
        per_dim_std=np.ones(n_dims),
        noise_pct=0.0,
        seed=0,
    )
