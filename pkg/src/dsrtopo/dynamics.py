"""Ground-truth trajectory generation and dataset preparation.

Four benchmark systems (Lorenz-63, Lorenz-96, Rossler, bursting neuron) are
integrated with a classic fourth-order Runge-Kutta scheme. Datasets are
per-dimension standardized, optionally corrupted with Gaussian observation
noise, and written as CSV plus a JSON sidecar with the applied statistics.
A smoothing/embedding pipeline turns raw 1-D recordings (ECG) into datasets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, DivergenceError, InvalidArgumentError

SYSTEM_KINDS = ("lorenz63", "lorenz96", "rossler", "bursting_neuron")

# Standard parameter set producing bursting activity (fast spikes on a slow
# oscillation). Units: mV, ms, mS, uF. The NMDA reversal potential is 0 mV.
BURSTING_NEURON_PARAMS = {
    "c_m": 6.0,
    "g_l": 8.0,
    "e_l": -80.0,
    "g_na": 20.0,
    "e_na": 60.0,
    "v_h_na": -20.0,
    "k_na": 15.0,
    "g_k": 10.0,
    "e_k": -90.0,
    "v_h_k": -25.0,
    "k_k": 5.0,
    "tau_n": 1.0,
    "g_m": 25.0,
    "v_h_m": -15.0,
    "k_m": 5.0,
    "tau_h": 200.0,
    "g_nmda": 10.2,
    "e_nmda": 0.0,
}


@dataclass
class SystemSpec:
    """A benchmark system: kind, named parameters, time step, dimension."""

    kind: str
    params: dict[str, float]
    dt: float
    state_dim: int

    def __post_init__(self):
        if self.kind not in SYSTEM_KINDS:
            raise InvalidArgumentError(
                f"unknown system kind {self.kind!r}; valid kinds: {SYSTEM_KINDS}"
            )
        if self.dt <= 0:
            raise InvalidArgumentError("dt must be positive")
        if self.kind == "lorenz96":
            if self.state_dim < 4:
                raise InvalidArgumentError("lorenz96 needs state_dim >= 4")
        elif self.state_dim != 3:
            raise InvalidArgumentError(f"{self.kind} is a 3-dimensional system")


@dataclass
class Trajectory:
    """A T x N matrix of states over time with a fixed time step."""

    data: np.ndarray
    dt: float
    meta: str = ""
    diverged: bool = False

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise InvalidArgumentError("trajectory data must be a T x N matrix, T >= 1")
        if not self.diverged and not np.all(np.isfinite(self.data)):
            raise InvalidArgumentError("trajectory contains non-finite entries")

    @property
    def n_steps(self) -> int:
        return self.data.shape[0]

    @property
    def n_dims(self) -> int:
        return self.data.shape[1]


@dataclass
class Dataset:
    """A standardized (and optionally noise-corrupted) training series.

    ``per_dim_mean``/``per_dim_std`` record the standardization that was
    applied, so the pre-noise trajectory can be recovered exactly.
    """

    series: Trajectory
    per_dim_mean: np.ndarray
    per_dim_std: np.ndarray
    noise_pct: float
    seed: int

    def destandardize(self, data: np.ndarray) -> np.ndarray:
        """Map standardized coordinates back to the original scale."""
        return np.asarray(data) * self.per_dim_std + self.per_dim_mean


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def bursting_gates(v: float, params: dict[str, float] | None = None):
    """Limit values (m_inf, n_inf, h_inf) of the gating variables at voltage v."""
    p = BURSTING_NEURON_PARAMS if params is None else params
    m_inf = _sigmoid((v - p["v_h_na"]) / p["k_na"])
    n_inf = _sigmoid((v - p["v_h_k"]) / p["k_k"])
    h_inf = _sigmoid((v - p["v_h_m"]) / p["k_m"])
    return m_inf, n_inf, h_inf


def vector_field(spec: SystemSpec, state: np.ndarray) -> np.ndarray:
    """Time derivative of ``state`` under the given system. Pure function."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (spec.state_dim,):
        raise InvalidArgumentError(
            f"state has shape {state.shape}, expected ({spec.state_dim},)"
        )
    p = spec.params
    if spec.kind == "lorenz63":
        x, y, z = state
        return np.array(
            [
                p["sigma"] * (y - x),
                x * (p["rho"] - z) - y,
                x * y - p["beta"] * z,
            ]
        )
    if spec.kind == "lorenz96":
        # cyclic boundary: x_{-1} = x_{N-1}, x_0 = x_N, x_{N+1} = x_1
        xp1 = np.roll(state, -1)
        xm1 = np.roll(state, 1)
        xm2 = np.roll(state, 2)
        return (xp1 - xm2) * xm1 - state + p["forcing"]
    if spec.kind == "rossler":
        x, y, z = state
        return np.array(
            [
                -y - z,
                x + p["a"] * y,
                p["b"] + z * (x - p["c"]),
            ]
        )
    # bursting neuron: state = (V, h, n); the membrane equation is written
    # -C_m dV/dt = sum of currents, so dV/dt = -(currents)/C_m
    v, h, n = state
    m_inf, n_inf, h_inf = bursting_gates(v, p)
    currents = (
        p["g_l"] * (v - p["e_l"])
        + p["g_na"] * m_inf * (v - p["e_na"])
        + p["g_k"] * n * (v - p["e_k"])
        + p["g_m"] * h * (v - p["e_k"])
        + p["g_nmda"] / (1.0 + 0.33 * math.exp(-0.0625 * v)) * (v - p["e_nmda"])
    )
    return np.array(
        [
            -currents / p["c_m"],
            (h_inf - h) / p["tau_h"],
            (n_inf - n) / p["tau_n"],
        ]
    )


def rk4_path(f, x0: np.ndarray, dt: float, n_steps: int) -> np.ndarray:
    """Classic RK4 integration of dx/dt = f(x); returns n_steps + 1 rows.

    Raises :class:`DivergenceError` (carrying the last valid row index) if an
    intermediate state goes non-finite.
    """
    if n_steps < 1:
        raise InvalidArgumentError("n_steps must be >= 1")
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise InvalidArgumentError("initial state must be finite")
    out = np.empty((n_steps + 1, x0.shape[0]))
    out[0] = x0
    x = x0
    for t in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(
                f"integration diverged at step {t + 1}", last_valid_index=t
            )
        out[t + 1] = x
    return out


def integrate_rk4(spec: SystemSpec, x0: np.ndarray, n_steps: int) -> Trajectory:
    """Integrate the system from ``x0``; row 0 of the result equals ``x0``."""
    data = rk4_path(lambda x: vector_field(spec, x), x0, spec.dt, n_steps)
    return Trajectory(data=data, dt=spec.dt, meta=spec.kind)


def default_initial_state(spec: SystemSpec) -> np.ndarray:
    """Conventional initial condition per system (overridable in configs)."""
    if spec.kind == "lorenz63":
        return np.array([0.1, 0.1, 0.1])
    if spec.kind == "lorenz96":
        x0 = np.full(spec.state_dim, spec.params["forcing"])
        x0[0] += 0.01
        return x0
    if spec.kind == "rossler":
        return np.array([1.0, 1.0, 1.0])
    _, n_inf, h_inf = bursting_gates(-60.0, spec.params)
    return np.array([-60.0, h_inf, n_inf])


def simulate_system(
    spec: SystemSpec,
    n_steps: int,
    x0: np.ndarray | None = None,
    discard: int = 1000,
) -> Trajectory:
    """Integrate and drop the first ``discard`` steps so the trajectory starts
    on the attractor."""
    if x0 is None:
        x0 = default_initial_state(spec)
    full = integrate_rk4(spec, x0, n_steps + discard)
    return Trajectory(data=full.data[discard:], dt=spec.dt, meta=spec.kind)


def standardize(data: np.ndarray):
    """Per-dimension zero-mean / unit-std scaling; returns (scaled, mean, std)."""
    data = np.asarray(data, dtype=np.float64)
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    if np.any(std <= 0.0) or not np.all(np.isfinite(std)):
        bad = np.nonzero(~(std > 0.0))[0].tolist()
        raise DegenerateDataError(f"zero-variance dimension(s): {bad}")
    return (data - mean) / std, mean, std


def make_dataset(traj: Trajectory, noise_pct: float, seed: int) -> Dataset:
    """Standardize each dimension, then add i.i.d. Gaussian observation noise
    with per-dimension std ``noise_pct``. Deterministic in ``seed``."""
    if not np.all(np.isfinite(traj.data)):
        raise InvalidArgumentError("trajectory must be finite")
    scaled, mean, std = standardize(traj.data)
    if noise_pct > 0.0:
        rng = np.random.default_rng(seed)
        scaled = scaled + rng.normal(0.0, noise_pct, size=scaled.shape)
    series = Trajectory(data=scaled, dt=traj.dt, meta=traj.meta)
    return Dataset(
        series=series,
        per_dim_mean=mean,
        per_dim_std=std,
        noise_pct=float(noise_pct),
        seed=int(seed),
    )


def gaussian_kernel(sigma: float, length: int) -> np.ndarray:
    """Discrete Gaussian kernel of the given length, normalized to sum 1."""
    if sigma <= 0 or length < 1:
        raise InvalidArgumentError("sigma must be > 0 and length >= 1")
    offsets = np.arange(length) - length // 2
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def smooth_series(raw: np.ndarray, sigma: float, window: int) -> np.ndarray:
    """Gaussian-kernel smoothing; boundaries replicate the edge samples."""
    kernel = gaussian_kernel(sigma, window)
    raw = np.asarray(raw, dtype=np.float64)
    padded = np.pad(raw, ((window - 1) // 2, window // 2), mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def delay_embed(series: np.ndarray, embed_dim: int, lag: int) -> np.ndarray:
    """Forward time-delay embedding: row t is (x_t, x_{t+lag}, ..., x_{t+(m-1)lag})."""
    if embed_dim < 1 or lag < 1:
        raise InvalidArgumentError("embed_dim and lag must be >= 1")
    series = np.asarray(series, dtype=np.float64)
    n_rows = series.shape[0] - (embed_dim - 1) * lag
    if n_rows < 2:
        raise InvalidArgumentError("series too short for the requested embedding")
    cols = [series[j * lag : j * lag + n_rows] for j in range(embed_dim)]
    return np.stack(cols, axis=1)


def preprocess_timeseries(
    raw: np.ndarray,
    smooth_sigma: float = 6.0,
    window: int = 49,
    embed_dim: int = 5,
    lag: int = 10,
    noise_pct: float = 0.0,
    seed: int = 0,
    dt: float = 1.0 / 700.0,
) -> Dataset:
    """Smooth, standardize and delay-embed a raw 1-D recording into a Dataset.

    Defaults follow the ECG pipeline: Gaussian smoothing (sigma 6, window 49)
    and a 5-dimensional embedding. The embedding lag is configurable.
    """
    raw = np.asarray(raw, dtype=np.float64).ravel()
    if raw.shape[0] <= window + (embed_dim - 1) * lag:
        raise InvalidArgumentError(
            f"series of length {raw.shape[0]} too short for window {window}, "
            f"embed_dim {embed_dim}, lag {lag}"
        )
    smoothed = smooth_series(raw, smooth_sigma, window)
    scaled, _, _ = standardize(smoothed[:, None])
    embedded = delay_embed(scaled[:, 0], embed_dim, lag)
    traj = Trajectory(data=embedded, dt=dt, meta="preprocessed")
    return make_dataset(traj, noise_pct, seed)


def system_preset(name: str) -> tuple[SystemSpec, float]:
    """Named benchmark presets; returns (spec, observation noise fraction)."""
    presets = {
        "lorenz63": (
            SystemSpec(
                "lorenz63",
                {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
                dt=0.01,
                state_dim=3,
            ),
            0.05,
        ),
        "lorenz96": (
            SystemSpec("lorenz96", {"forcing": 8.0}, dt=0.04, state_dim=5),
            0.01,
        ),
        "rossler": (
            SystemSpec(
                "rossler", {"a": 0.2, "b": 0.2, "c": 5.7}, dt=0.08, state_dim=3
            ),
            0.05,
        ),
        "bursting_neuron": (
            SystemSpec(
                "bursting_neuron", dict(BURSTING_NEURON_PARAMS), dt=0.05, state_dim=3
            ),
            0.02,
        ),
    }
    if name not in presets:
        raise InvalidArgumentError(
            f"unknown system preset {name!r}; valid presets: {sorted(presets)}"
        )
    return presets[name]


def _format(v: float) -> str:
    return repr(float(v))


def save_dataset(dataset: Dataset, csv_path: str | Path) -> None:
    """Write the series as CSV (header t,dim0,...) plus a JSON sidecar."""
    csv_path = Path(csv_path)
    data = dataset.series.data
    n = data.shape[1]
    header = "t," + ",".join(f"dim{i}" for i in range(n))
    lines = [header]
    for t in range(data.shape[0]):
        lines.append(str(t) + "," + ",".join(_format(v) for v in data[t]))
    csv_path.write_text("\n".join(lines) + "\n")
    sidecar = {
        "dt": dataset.series.dt,
        "seed": dataset.seed,
        "noise_pct": dataset.noise_pct,
        "per_dim_mean": [float(v) for v in dataset.per_dim_mean],
        "per_dim_std": [float(v) for v in dataset.per_dim_std],
        "meta": dataset.series.meta,
        "diverged": dataset.series.diverged,
    }
    csv_path.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )


def load_dataset(csv_path: str | Path) -> Dataset:
    """Inverse of :func:`save_dataset`."""
    csv_path = Path(csv_path)
    rows = csv_path.read_text().strip().splitlines()
    data = np.array(
        [[float(v) for v in line.split(",")[1:]] for line in rows[1:]]
    )
    sidecar = json.loads(csv_path.with_suffix(".json").read_text())
    series = Trajectory(
        data=data,
        dt=sidecar["dt"],
        meta=sidecar.get("meta", ""),
        diverged=sidecar.get("diverged", False),
    )
    return Dataset(
        series=series,
        per_dim_mean=np.array(sidecar["per_dim_mean"]),
        per_dim_std=np.array(sidecar["per_dim_std"]),
        noise_pct=sidecar["noise_pct"],
        seed=sidecar["seed"],
    )


def load_raw_series(path: str | Path) -> np.ndarray:
    """Read a raw series: single-column CSV or newline-delimited floats."""
    text = Path(path).read_text().strip().splitlines()
    values = []
    for line in text:
        token = line.split(",")[0].strip()
        if token in ("", "value", "ecg", "signal"):
            continue
        values.append(float(token))
    if not values:
        raise InvalidArgumentError(f"no numeric data found in {path}")
    return np.array(values)
