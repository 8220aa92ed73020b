"""Iterative pruning under magnitude, random, and geometric importance.

The iterative protocol trains from a fixed initial draw, scores the remaining
weights, removes the lowest-scoring fraction, resets the parameters and
repeats. Geometric importance scores a weight by how much its removal shifts
the state-space divergence of a freshly generated orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, metrics
from .dynamics import Dataset, Trajectory
from .errors import InvalidArgumentError, InvalidModelError, TrainingFailureError
from .metrics import EvalReport, StspReference, default_bins
from .model import (
    DIVERGENCE_GUARD,
    PlrnnParams,
    TopologyMask,
    latent_from_observation,
    masked_weights,
)
from .seeding import derive_seed
from .training import TrainConfig, TrainResult, init_params, train

CRITERIA = ("magnitude", "random", "geometric")


@dataclass
class ImportanceScores:
    """Per-entry importance aligned with W; masked entries carry +inf."""

    scores: np.ndarray
    criterion: str


@dataclass
class GeometricScoreConfig:
    """Orbit settings for geometric importance evaluation."""

    n_steps: int = 5000
    transient: int = 500
    k: int | None = None


@dataclass
class PruneSchedule:
    """Per-iteration removal fraction, iteration count, retrain budget."""

    fraction_per_iter: float = 0.2
    n_iters: int = 11
    retrain_epochs: int = 500

    def __post_init__(self):
        if not 0.0 < self.fraction_per_iter < 1.0:
            raise InvalidArgumentError("fraction_per_iter must be in (0, 1)")
        if self.n_iters < 1 or self.retrain_epochs < 1:
            raise InvalidArgumentError("n_iters and retrain_epochs must be >= 1")


@dataclass
class PruneIteration:
    """One pruning iteration: the mask trained under, and how the model did."""

    iteration: int
    mask: TopologyMask
    sparsity: float
    report: EvalReport | None
    status: str
    best_params: PlrnnParams | None = None


@dataclass
class PruneTrace:
    """Full record of an iterative pruning run."""

    criterion: str
    iterations: list[PruneIteration]
    final_mask: TopologyMask
    status: str


def importance_magnitude(p: PlrnnParams, mask: TopologyMask) -> ImportanceScores:
    """Importance = |w| on unmasked entries."""
    scores = np.abs(p.w).astype(np.float64)
    scores[mask.bits == 0] = np.inf
    return ImportanceScores(scores=scores, criterion="magnitude")


def importance_random(mask: TopologyMask, seed: int) -> ImportanceScores:
    """i.i.d. uniform importance on unmasked entries; deterministic in seed."""
    rng = np.random.default_rng(seed)
    scores = rng.uniform(size=mask.bits.shape)
    scores[mask.bits == 0] = np.inf
    return ImportanceScores(scores=scores, criterion="random")


def importance_geometric(
    p: PlrnnParams,
    mask: TopologyMask,
    true_traj: Trajectory,
    eval_cfg: GeometricScoreConfig | None = None,
) -> ImportanceScores:
    """Importance = |change in state-space divergence when the entry is removed|.

    The baseline and every candidate are scored on a fresh orbit generated
    from the same forced initial state. A candidate whose removal makes the
    orbit diverge gets +inf (maximally important). Raises
    :class:`InvalidModelError` when the baseline itself diverges.
    """
    cfg = eval_cfg or GeometricScoreConfig()
    data = true_traj.data if isinstance(true_traj, Trajectory) else np.asarray(true_traj)
    k = default_bins(data.shape[1]) if cfg.k is None else cfg.k
    ref = StspReference(data, k)
    z1 = latent_from_observation(data[0], p.m_dim)
    wm = masked_weights(p, mask)
    n_total = cfg.transient + cfg.n_steps

    def orbit_divergence(weights: np.ndarray) -> float | None:
        latents, n_valid = _kernels.plrnn_orbit(
            p.a_diag, weights, p.h, z1, n_total, DIVERGENCE_GUARD
        )
        if n_valid < n_total:
            return None
        return ref.divergence(latents[cfg.transient :, : p.n_dim])

    baseline = orbit_divergence(wm)
    if baseline is None:
        raise InvalidModelError("baseline generation diverged; cannot score weights")
    scores = np.full((p.m_dim, p.m_dim), np.inf)
    rows, cols = np.nonzero(mask.bits)
    for i, j in zip(rows, cols):
        saved = wm[i, j]
        wm[i, j] = 0.0
        d = orbit_divergence(wm)
        wm[i, j] = saved
        scores[i, j] = math.inf if d is None else abs(d - baseline)
    return ImportanceScores(scores=scores, criterion="geometric")


def compute_importance(
    criterion: str,
    p: PlrnnParams,
    mask: TopologyMask,
    true_traj: Trajectory,
    seed: int,
    eval_cfg: GeometricScoreConfig | None = None,
) -> ImportanceScores:
    """Dispatch on the criterion name."""
    if criterion == "magnitude":
        return importance_magnitude(p, mask)
    if criterion == "random":
        return importance_random(mask, seed)
    if criterion == "geometric":
        return importance_geometric(p, mask, true_traj, eval_cfg)
    raise InvalidArgumentError(f"unknown criterion {criterion!r}; valid: {CRITERIA}")


def prune_lowest(
    mask: TopologyMask, scores: ImportanceScores, fraction: float
) -> TopologyMask:
    """Remove the lowest-scoring entries so floor((1-fraction)*remaining) survive.

    Ties break on lowest (row, col) in lexicographic order. Entries with +inf
    scores (already masked, or diverging candidates) are never selected.
    """
    remaining = mask.n_active
    n_keep = int(math.floor((1.0 - fraction) * remaining))
    n_remove = remaining - n_keep
    flat_scores = scores.scores.ravel()
    order = np.lexsort((np.arange(flat_scores.size), flat_scores))
    new_bits = mask.bits.copy().ravel()
    removed = 0
    for idx in order:
        if removed >= n_remove:
            break
        if not np.isfinite(flat_scores[idx]) or new_bits[idx] == 0:
            continue
        new_bits[idx] = 0
        removed += 1
    return TopologyMask(new_bits.reshape(mask.bits.shape))


def iterative_prune(
    dataset: Dataset,
    config: TrainConfig,
    criterion: str,
    schedule: PruneSchedule,
    m_dim: int,
    eval_cfg: GeometricScoreConfig | None = None,
    initial_mask: TopologyMask | None = None,
    keep_params: bool = False,
) -> PruneTrace:
    """Iterative pruning: train from the original draw, score, cut, reset.

    Each iteration trains with the current mask for ``schedule.retrain_epochs``
    epochs starting from the same initial parameters, evaluates the best
    checkpoint into the trace, then removes the lowest-importance fraction of
    the remaining entries. A training failure halts the run with a partial
    trace (status "failed").
    """
    if criterion not in CRITERIA:
        raise InvalidArgumentError(f"unknown criterion {criterion!r}; valid: {CRITERIA}")
    n_dim = dataset.series.data.shape[1]
    theta0 = init_params(
        m_dim, n_dim, config.init_sigma, derive_seed(config.seed, "init")
    )
    mask = initial_mask.copy() if initial_mask is not None else TopologyMask.full(m_dim)
    train_cfg = config.replace(epochs=schedule.retrain_epochs)
    iterations: list[PruneIteration] = []
    for it in range(1, schedule.n_iters + 1):
        try:
            result = train(dataset, mask, train_cfg, params0=theta0)
        except TrainingFailureError:
            iterations.append(
                PruneIteration(
                    iteration=it,
                    mask=mask.copy(),
                    sparsity=mask.sparsity,
                    report=None,
                    status="failed",
                )
            )
            return PruneTrace(
                criterion=criterion,
                iterations=iterations,
                final_mask=mask.copy(),
                status="failed",
            )
        report = metrics.evaluate_model(
            result.best_params,
            mask,
            dataset,
            n_gen=config.eval_gen_steps,
            transient=config.eval_transient,
        )
        iterations.append(
            PruneIteration(
                iteration=it,
                mask=mask.copy(),
                sparsity=mask.sparsity,
                report=report,
                status="ok",
                best_params=result.best_params if keep_params else None,
            )
        )
        scores = compute_importance(
            criterion,
            result.best_params,
            mask,
            dataset.series,
            derive_seed(config.seed, f"scores:{it}"),
            eval_cfg,
        )
        mask = prune_lowest(mask, scores, schedule.fraction_per_iter)
    return PruneTrace(
        criterion=criterion,
        iterations=iterations,
        final_mask=mask,
        status="ok",
    )


@dataclass
class PairEffect:
    """Divergence changes for removing two weights singly and jointly."""

    pair: tuple[tuple[int, int], tuple[int, int]]
    delta_i: float
    delta_j: float
    delta_joint: float


def additivity_check(
    p: PlrnnParams,
    mask: TopologyMask,
    true_traj: Trajectory,
    pairs: list[tuple[tuple[int, int], tuple[int, int]]],
    eval_cfg: GeometricScoreConfig | None = None,
) -> list[PairEffect]:
    """Individual vs joint removal effects on the state-space divergence."""
    cfg = eval_cfg or GeometricScoreConfig()
    data = true_traj.data if isinstance(true_traj, Trajectory) else np.asarray(true_traj)
    k = default_bins(data.shape[1]) if cfg.k is None else cfg.k
    ref = StspReference(data, k)
    z1 = latent_from_observation(data[0], p.m_dim)
    wm = masked_weights(p, mask)
    n_total = cfg.transient + cfg.n_steps
    sentinel = metrics.d_stsp_sentinel(data.shape[1], k)

    def divergence(weights) -> float:
        latents, n_valid = _kernels.plrnn_orbit(
            p.a_diag, weights, p.h, z1, n_total, DIVERGENCE_GUARD
        )
        if n_valid < n_total:
            return sentinel
        return ref.divergence(latents[cfg.transient :, : p.n_dim])

    baseline = divergence(wm)
    out = []
    for (i1, j1), (i2, j2) in pairs:
        if mask.bits[i1, j1] == 0 or mask.bits[i2, j2] == 0:
            raise InvalidArgumentError("additivity pairs must be unmasked entries")
        s1, s2 = wm[i1, j1], wm[i2, j2]
        wm[i1, j1] = 0.0
        d1 = divergence(wm)
        wm[i1, j1] = s1
        wm[i2, j2] = 0.0
        d2 = divergence(wm)
        wm[i1, j1] = 0.0
        d12 = divergence(wm)
        wm[i1, j1] = s1
        wm[i2, j2] = s2
        out.append(
            PairEffect(
                pair=((i1, j1), (i2, j2)),
                delta_i=d1 - baseline,
                delta_j=d2 - baseline,
                delta_joint=d12 - baseline,
            )
        )
    return out


@dataclass
class ReinitResult:
    """Paired best divergences: original draw vs freshly resampled weights."""

    d_stsp_original: list[float]
    d_stsp_reinit: list[float]


def reinit_experiment(
    dataset: Dataset,
    config: TrainConfig,
    mask: TopologyMask,
    n_seeds: int,
) -> ReinitResult:
    """Train a fixed mask from the stored initial draw vs a fresh redraw.

    For each seed the two arms share the batch schedule; only the initial
    parameters differ. Failed trainings are recorded as NaN rather than
    aborting the experiment.
    """
    n_dim = dataset.series.data.shape[1]
    theta0 = init_params(
        mask.m_dim, n_dim, config.init_sigma, derive_seed(config.seed, "init")
    )
    d_orig: list[float] = []
    d_star: list[float] = []
    for s in range(n_seeds):
        run_cfg = config.replace(seed=derive_seed(config.seed, f"reinit-run:{s}"))
        theta_star = init_params(
            mask.m_dim, n_dim, config.init_sigma, derive_seed(config.seed, f"reinit-draw:{s}")
        )
        for params0, sink in ((theta0, d_orig), (theta_star, d_star)):
            try:
                result = train(dataset, mask, run_cfg, params0=params0)
                sink.append(result.best_d_stsp)
            except TrainingFailureError:
                sink.append(math.nan)
    return ReinitResult(d_stsp_original=d_orig, d_stsp_reinit=d_star)


TRACE_HEADER = "iter,sparsity,d_stsp,d_hellinger,pe20,status"


def trace_csv_lines(trace: PruneTrace) -> list[str]:
    """Trace rows in the documented CSV schema."""
    lines = [TRACE_HEADER]
    for rec in trace.iterations:
        if rec.report is None:
            lines.append(f"{rec.iteration},{rec.sparsity!r},,,,{rec.status}")
        else:
            r = rec.report
            lines.append(
                f"{rec.iteration},{rec.sparsity!r},{r.d_stsp!r},"
                f"{r.d_hellinger!r},{r.pred_error_20!r},{rec.status}"
            )
    return lines
