"""Reconstruction-quality measures.

Geometry agreement is a binned Kullback-Leibler divergence between state-space
occupancy distributions (``d_stsp``); long-term temporal agreement is the mean
dimension-wise Hellinger distance between smoothed, normalized power spectra
(``d_hellinger``); short-term accuracy is an n-step-ahead prediction error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from . import _kernels
from .dynamics import Dataset, Trajectory
from .errors import (
    DegenerateDataError,
    DivergenceError,
    InvalidArgumentError,
    UnsupportedDimensionError,
)
from .model import PlrnnParams, TopologyMask, latent_from_observation, masked_weights

DEFAULT_SPECTRUM_SMOOTHING = 20.0
DEFAULT_PRED_STEPS = 20


def default_bins(n_dims: int) -> int:
    """Bins per dimension: 30 for up to 3 dimensions, 8 above."""
    return 30 if n_dims <= 3 else 8


def d_stsp_sentinel(n_dims: int, k: int | None = None) -> float:
    """Worst-case value assigned to diverged/empty generations: ln(k^N)."""
    k = default_bins(n_dims) if k is None else k
    return n_dims * math.log(k)


@dataclass
class BinnedHistogram:
    """Occupancy counts over a regular k^N grid."""

    counts: np.ndarray  # flat, length k**n_dims
    edges: list[np.ndarray]
    k: int
    n_dims: int


@dataclass
class EvalReport:
    """Evaluation summary for one trained model."""

    d_stsp: float
    d_hellinger: float
    pred_error_20: float
    sparsity: float
    diverged: bool


def _traj_data(x) -> np.ndarray:
    if isinstance(x, Trajectory):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _is_diverged(x) -> bool:
    return isinstance(x, Trajectory) and x.diverged


def bin_edges_from(data: np.ndarray, k: int, margin: float = 0.05) -> list[np.ndarray]:
    """Per-dimension uniform bin edges spanning the data range plus a margin."""
    edges = []
    for d in range(data.shape[1]):
        lo, hi = float(data[:, d].min()), float(data[:, d].max())
        span = hi - lo
        if span <= 0.0:
            lo, hi = lo - 0.5, hi + 0.5
        else:
            lo, hi = lo - margin * span, hi + margin * span
        edges.append(np.linspace(lo, hi, k + 1))
    return edges


def bin_trajectory(data: np.ndarray, edges: list[np.ndarray]) -> BinnedHistogram:
    """Histogram points on the grid; out-of-range points go to boundary bins."""
    data = np.asarray(data, dtype=np.float64)
    n_dims = data.shape[1]
    k = edges[0].shape[0] - 1
    flat = np.zeros(data.shape[0], dtype=np.int64)
    for d in range(n_dims):
        lo, hi = edges[d][0], edges[d][-1]
        width = (hi - lo) / k
        idx = np.floor((data[:, d] - lo) / width).astype(np.int64)
        np.clip(idx, 0, k - 1, out=idx)
        flat = flat * k + idx
    counts = np.bincount(flat, minlength=k**n_dims)
    return BinnedHistogram(counts=counts, edges=edges, k=k, n_dims=n_dims)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats between two discrete distributions."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    p = p / p.sum()
    q = q / q.sum()
    support = p > 0
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


class StspReference:
    """Precomputed true-orbit histogram for repeated divergence queries.

    A Laplace pseudo-count of 1 goes on every bin of both histograms, so the
    divergence stays finite for empty generated bins and is exactly zero for
    bit-identical occupancy. KL is evaluated as
    sum_i p_i log(c_i + 1) - log D over the occupied bins of each histogram
    (zero-count bins contribute exactly nothing), which makes scoring a
    candidate orbit cheap: one histogram pass over its points.
    """

    def __init__(self, true_data: np.ndarray, k: int):
        true_data = np.asarray(true_data, dtype=np.float64)
        self.k = k
        self.n_dims = true_data.shape[1]
        self.edges = bin_edges_from(true_data, k)
        counts = bin_trajectory(true_data, self.edges).counts
        self._p = (counts + 1.0) / (counts.sum() + counts.shape[0])
        self._true_term = self._occupied_sum(counts) - math.log(
            counts.sum() + counts.shape[0]
        )

    def _occupied_sum(self, counts: np.ndarray) -> float:
        occ = np.nonzero(counts)[0]
        return float(np.sum(self._p[occ] * np.log(counts[occ] + 1.0)))

    def divergence(self, gen_data: np.ndarray) -> float:
        gen_data = np.asarray(gen_data, dtype=np.float64)
        if gen_data.shape[0] == 0:
            return d_stsp_sentinel(self.n_dims, self.k)
        counts = bin_trajectory(gen_data, self.edges).counts
        gen_term = self._occupied_sum(counts) - math.log(
            counts.sum() + counts.shape[0]
        )
        return self._true_term - gen_term


def d_stsp(true_traj, gen_traj, k: int | None = None) -> float:
    """Binned state-space KL divergence between true and generated orbits.

    Bin edges come from the true trajectory (5% margin); generated points
    outside the range are clipped into boundary bins. A Laplace pseudo-count
    of 1 is added to every bin of both histograms before normalization, so
    identical inputs give exactly 0 and empty generated bins stay finite.
    Diverged or empty generations get the worst-case sentinel ln(k^N).
    """
    true_data = _traj_data(true_traj)
    n_dims = true_data.shape[1]
    if not 2 <= n_dims <= 5:
        raise UnsupportedDimensionError(
            f"d_stsp supports 2..5 dimensions, got {n_dims}"
        )
    k = default_bins(n_dims) if k is None else k
    gen_data = _traj_data(gen_traj)
    if _is_diverged(gen_traj) or gen_data.shape[0] == 0:
        return d_stsp_sentinel(n_dims, k)
    if gen_data.shape[1] != n_dims:
        raise InvalidArgumentError("trajectories must share their dimension")
    return StspReference(true_data, k).divergence(gen_data)


def power_spectrum(
    series: np.ndarray, smooth_sigma_bins: float = DEFAULT_SPECTRUM_SMOOTHING
) -> np.ndarray:
    """Smoothed, normalized power spectrum of a 1-D series.

    Magnitude-squared FFT of the mean-removed series over non-negative
    frequencies, Gaussian-smoothed across frequency bins, normalized to sum 1.
    """
    series = np.asarray(series, dtype=np.float64).ravel()
    if series.shape[0] < 64:
        raise InvalidArgumentError("series must have length >= 64")
    centered = series - series.mean()
    if np.all(centered == 0.0) or float(np.abs(centered).max()) == 0.0:
        raise DegenerateDataError("constant series has no power spectrum")
    ps = np.abs(np.fft.rfft(centered)) ** 2
    smoothed = gaussian_filter1d(ps, smooth_sigma_bins)
    smoothed = np.maximum(smoothed, 0.0)
    total = smoothed.sum()
    if total <= 0.0:
        raise DegenerateDataError("degenerate spectrum")
    return smoothed / total


def _degenerate_spectrum(n_bins: int, smooth_sigma_bins: float) -> np.ndarray:
    """Spectrum of a constant signal: a smoothed delta at zero frequency."""
    delta = np.zeros(n_bins)
    delta[0] = 1.0
    smoothed = gaussian_filter1d(delta, smooth_sigma_bins)
    return smoothed / smoothed.sum()


def hellinger_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Hellinger distance sqrt(1 - BC) between two discrete distributions.

    Evaluated as ||sqrt(p) - sqrt(q)|| / sqrt(2), which is exactly 0 for
    identical inputs and exactly 1 for disjoint unit-mass supports.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    h2 = 0.5 * float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))
    return math.sqrt(min(1.0, h2))


def d_hellinger(
    true_traj, gen_traj, smooth_sigma_bins: float = DEFAULT_SPECTRUM_SMOOTHING
) -> float:
    """Mean dimension-wise Hellinger distance between power spectra, in [0, 1].

    A constant generated dimension is compared against a degenerate
    delta-at-zero-frequency spectrum. Diverged generations score 1.0.
    """
    true_data = _traj_data(true_traj)
    gen_data = _traj_data(gen_traj)
    if _is_diverged(gen_traj) or gen_data.shape[0] < 64:
        return 1.0
    if gen_data.shape[1] != true_data.shape[1]:
        raise InvalidArgumentError("trajectories must share their dimension")
    t = min(true_data.shape[0], gen_data.shape[0])
    dists = []
    for d in range(true_data.shape[1]):
        f = power_spectrum(true_data[:t, d], smooth_sigma_bins)
        try:
            g = power_spectrum(gen_data[:t, d], smooth_sigma_bins)
        except DegenerateDataError:
            g = _degenerate_spectrum(f.shape[0], smooth_sigma_bins)
        dists.append(hellinger_distance(f, g))
    return float(np.mean(dists))


def pred_error(
    p: PlrnnParams,
    mask: TopologyMask,
    dataset: Dataset,
    n_steps: int = DEFAULT_PRED_STEPS,
    n_starts: int = 200,
) -> float:
    """n-step-ahead mean squared prediction error.

    From evenly spaced start points, the latent state is initialized by
    forcing (observed components from the data, hidden zeros) and free-run for
    ``n_steps``; the squared error between the observed components and the
    data at the horizon is averaged over starts and dimensions.
    """
    if n_steps < 1:
        raise InvalidArgumentError("n_steps must be >= 1")
    data = dataset.series.data
    t_total = data.shape[0]
    if t_total <= n_steps + 1:
        raise InvalidArgumentError("dataset too short for the horizon")
    n = p.n_dim
    starts = np.unique(
        np.linspace(0, t_total - n_steps - 1, num=min(n_starts, t_total - n_steps), dtype=int)
    )
    z0 = np.zeros((starts.shape[0], p.m_dim))
    z0[:, :n] = data[starts, :n]
    wm = masked_weights(p, mask)
    z_final = _kernels.plrnn_step_n_batch(p.a_diag, wm, p.h, z0, n_steps)
    preds = z_final[:, :n]
    targets = data[starts + n_steps, :n]
    if not np.all(np.isfinite(preds)):
        return float("inf")
    return float(np.mean((preds - targets) ** 2))


def evaluate_model(
    p: PlrnnParams,
    mask: TopologyMask,
    dataset: Dataset,
    n_gen: int = 10_000,
    transient: int = 500,
    k: int | None = None,
    smooth_sigma_bins: float = DEFAULT_SPECTRUM_SMOOTHING,
    pe_steps: int = DEFAULT_PRED_STEPS,
) -> EvalReport:
    """Generate a free-running orbit and score it against the dataset."""
    true_traj = dataset.series
    n_dims = true_traj.data.shape[1]
    k = default_bins(n_dims) if k is None else k
    z1 = latent_from_observation(true_traj.data[0], p.m_dim)
    diverged = False
    gen: Trajectory | None = None
    try:
        orbit = generate_orbit(p, mask, z1, transient + n_gen)
        if orbit.diverged or orbit.data.shape[0] <= transient:
            diverged = True
        else:
            gen = Trajectory(
                data=orbit.data[transient:], dt=true_traj.dt, meta="plrnn"
            )
    except DivergenceError:
        diverged = True
    if diverged:
        d_kl = d_stsp_sentinel(n_dims, k)
        d_h = 1.0
    else:
        d_kl = d_stsp(true_traj, gen, k)
        d_h = d_hellinger(true_traj, gen, smooth_sigma_bins)
    pe = pred_error(p, mask, dataset, pe_steps)
    return EvalReport(
        d_stsp=d_kl,
        d_hellinger=d_h,
        pred_error_20=pe,
        sparsity=mask.sparsity,
        diverged=diverged,
    )


def generate_orbit(
    p: PlrnnParams, mask: TopologyMask, z1: np.ndarray, n_steps: int
) -> Trajectory:
    """Free-running generation; thin wrapper kept here for evaluation reuse."""
    from .model import generate

    return generate(p, mask, z1, n_steps)


RESULTS_HEADER = "run_id,criterion,sparsity,d_stsp,d_hellinger,pe20,diverged,epoch_best"


def format_report_row(
    run_id: str, criterion: str, report: EvalReport, epoch_best
) -> str:
    """One results-CSV row for an evaluation report."""
    epoch = "" if epoch_best is None else str(int(epoch_best))
    return (
        f"{run_id},{criterion},{report.sparsity!r},{report.d_stsp!r},"
        f"{report.d_hellinger!r},{report.pred_error_20!r},"
        f"{int(report.diverged)},{epoch}"
    )
