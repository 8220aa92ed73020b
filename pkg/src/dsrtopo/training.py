"""BPTT training of masked PLRNNs with sparse identity teacher forcing.

Each epoch samples random subsequences into batches, runs the teacher-forced
forward pass, backpropagates the MSE loss exactly, and applies RAdam updates
with a geometrically annealed learning rate. Model selection keeps the
checkpoint with the lowest state-space divergence seen at evaluation points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, metrics
from .dynamics import Dataset
from .errors import InvalidArgumentError, TrainingFailureError
from .model import PlrnnParams, TopologyMask, masked_weights
from .seeding import derive_seed


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    seq_len: int = 200
    tau: int = 16
    batch_size: int = 16
    batches_per_epoch: int = 50
    epochs: int = 2000
    lr_start: float = 1e-2
    lr_end: float = 1e-5
    init_sigma: float = 0.01
    eval_every: int = 20
    seed: int = 0
    grad_clip: float | None = 10.0
    eval_gen_steps: int = 10_000
    eval_transient: int = 500
    d_stsp_threshold: float = 1.0
    early_stop_d_stsp: float | None = None

    def __post_init__(self):
        if self.tau < 1:
            raise InvalidArgumentError("tau must be >= 1")
        if self.seq_len < 2:
            raise InvalidArgumentError("seq_len must be >= 2")
        if not (self.lr_start >= self.lr_end > 0):
            raise InvalidArgumentError("need lr_start >= lr_end > 0")
        if self.epochs < 1 or self.batch_size < 1 or self.batches_per_epoch < 1:
            raise InvalidArgumentError("epochs, batch_size, batches_per_epoch >= 1")

    def replace(self, **kwargs) -> "TrainConfig":
        d = dict(self.__dict__)
        d.update(kwargs)
        return TrainConfig(**d)


@dataclass
class TrainPreset:
    """Benchmark hyperparameter set: model dims plus TrainConfig."""

    name: str
    m_dim: int
    n_dim: int
    config: TrainConfig
    noise_pct: float


def paper_preset(name: str) -> TrainPreset:
    """Named per-benchmark hyperparameter sets (full-scale values)."""
    table = {
        "lorenz63": (50, 3, 16, 200, 1e-2, 2000, 0.05),
        "ecg": (100, 5, 10, 50, 1e-3, 3000, 0.05),
        "bursting_neuron": (100, 3, 5, 50, 1e-3, 4000, 0.02),
        "rossler": (50, 3, 8, 300, 5e-3, 3000, 0.05),
        "lorenz96": (100, 5, 8, 200, 5e-3, 3000, 0.01),
    }
    if name not in table:
        raise InvalidArgumentError(
            f"unknown training preset {name!r}; valid presets: {sorted(table)}"
        )
    m, n, tau, seq_len, lr_start, epochs, noise = table[name]
    cfg = TrainConfig(
        seq_len=seq_len, tau=tau, epochs=epochs, lr_start=lr_start, lr_end=1e-5
    )
    return TrainPreset(name=name, m_dim=m, n_dim=n, config=cfg, noise_pct=noise)


@dataclass
class PlrnnGrads:
    """Gradient structure matching PlrnnParams."""

    a_diag: np.ndarray
    w: np.ndarray
    h: np.ndarray

    def global_norm(self) -> float:
        return math.sqrt(
            float(np.sum(self.a_diag**2) + np.sum(self.w**2) + np.sum(self.h**2))
        )

    def scale(self, factor: float) -> None:
        self.a_diag *= factor
        self.w *= factor
        self.h *= factor


@dataclass
class TrainResult:
    """Outcome of a training run."""

    best_params: PlrnnParams
    best_d_stsp: float
    loss_history: list[float]
    d_stsp_history: list[float]
    eval_epochs: list[int]
    epoch_of_threshold: int | None
    best_epoch: int


def init_params(m_dim: int, n_dim: int, init_sigma: float, seed: int) -> PlrnnParams:
    """Draw initial parameters.

    W entries are i.i.d. Gaussian with std ``init_sigma``, h is zero, and the
    diagonal of A comes from a random positive-definite matrix R R^T scaled by
    its largest eigenvalue (entries in (0, 1]).
    """
    if not (m_dim >= n_dim >= 1):
        raise InvalidArgumentError("need m_dim >= n_dim >= 1")
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((m_dim, m_dim))
    psd = r @ r.T
    lam_max = float(np.linalg.eigvalsh(psd)[-1])
    a_diag = np.diag(psd) / lam_max
    w = rng.normal(0.0, init_sigma, size=(m_dim, m_dim))
    return PlrnnParams(
        a_diag=a_diag, w=w, h=np.zeros(m_dim), m_dim=m_dim, n_dim=n_dim
    )


def stf_forward(
    p: PlrnnParams, mask: TopologyMask, seq: np.ndarray, tau: int
) -> tuple[np.ndarray, np.ndarray]:
    """Teacher-forced forward pass over one observation sequence.

    Returns the propagated latent states (seq_len x M, post-forcing) and the
    predictions observe(z_t) for t = 2..seq_len, recorded before forcing.
    """
    seq = np.ascontiguousarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise InvalidArgumentError("seq must be a T x N matrix")
    wm = masked_weights(p, mask)
    states, _, preds = _kernels.stf_forward_batch(
        p.a_diag, wm, p.h, seq[None, :, :], tau
    )
    return states[:, 0, :], preds[:, 0, :]


def mse_loss(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Sum of squared row differences normalized by S * (seq_len - 1).

    Accepts (T, N) single sequences or (S, T, N) batches; T here counts the
    predicted time steps (seq_len - 1).
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise InvalidArgumentError("prediction and target shapes differ")
    if predictions.ndim == 2:
        s_n, t_n = 1, predictions.shape[0]
    else:
        s_n, t_n = predictions.shape[0], predictions.shape[1]
    with np.errstate(over="ignore", invalid="ignore"):
        # overflow to inf is an expected signal handled by the training loop
        return float(np.sum((predictions - targets) ** 2) / (s_n * t_n))


def bptt_grads(
    p: PlrnnParams, mask: TopologyMask, batch: np.ndarray, tau: int
) -> PlrnnGrads:
    """Exact gradients of mse_loss through the teacher-forced forward pass.

    ``batch`` has shape (S, seq_len, N). Gradients of masked-out W entries are
    exactly zero; teacher-forced components block gradient flow.
    """
    batch = np.ascontiguousarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[None, :, :]
    if batch.shape[0] < 1:
        raise InvalidArgumentError("batch must be nonempty")
    wm = masked_weights(p, mask)
    states, phis, preds = _kernels.stf_forward_batch(p.a_diag, wm, p.h, batch, tau)
    da, dwm, dh = _kernels.bptt_backward_batch(
        p.a_diag, wm, states, phis, preds, batch, tau
    )
    dw = dwm * mask.bits
    if not (
        np.all(np.isfinite(da)) and np.all(np.isfinite(dw)) and np.all(np.isfinite(dh))
    ):
        raise TrainingFailureError("non-finite gradients")
    return PlrnnGrads(a_diag=da, w=dw, h=dh)


@dataclass
class RAdamState:
    """First/second moment estimates for rectified Adam."""

    step: int
    m_a: np.ndarray
    v_a: np.ndarray
    m_w: np.ndarray
    v_w: np.ndarray
    m_h: np.ndarray
    v_h: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def radam_init(
    p: PlrnnParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
) -> RAdamState:
    m = p.m_dim
    return RAdamState(
        step=0,
        m_a=np.zeros(m),
        v_a=np.zeros(m),
        m_w=np.zeros((m, m)),
        v_w=np.zeros((m, m)),
        m_h=np.zeros(m),
        v_h=np.zeros(m),
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def _radam_update(m, v, grad, state: RAdamState, t: int, lr: float):
    b1, b2 = state.beta1, state.beta2
    m *= b1
    m += (1.0 - b1) * grad
    v *= b2
    v += (1.0 - b2) * grad**2
    m_hat = m / (1.0 - b1**t)
    rho_inf = 2.0 / (1.0 - b2) - 1.0
    b2_t = b2**t
    rho_t = rho_inf - 2.0 * t * b2_t / (1.0 - b2_t)
    if rho_t > 4.0:
        rect = math.sqrt(
            ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
            / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
        )
        v_hat = np.sqrt(v / (1.0 - b2_t))
        return -lr * rect * m_hat / (v_hat + state.eps)
    # variance rectification undefined: plain bias-corrected momentum step
    return -lr * m_hat


def radam_step(
    state: RAdamState, p: PlrnnParams, grads: PlrnnGrads, lr: float
) -> tuple[PlrnnParams, RAdamState]:
    """One rectified-Adam update; returns fresh parameters and updated state."""
    t = state.step + 1
    state.step = t
    new = p.copy()
    new.a_diag += _radam_update(state.m_a, state.v_a, grads.a_diag, state, t, lr)
    new.w += _radam_update(state.m_w, state.v_w, grads.w, state, t, lr)
    new.h += _radam_update(state.m_h, state.v_h, grads.h, state, t, lr)
    return new, state


def anneal_lr(lr_start: float, lr_end: float, epoch: int, epochs: int) -> float:
    """Geometric interpolation: lr_start at epoch 0, lr_end at the last epoch."""
    if epochs <= 1:
        return lr_start
    return lr_start * (lr_end / lr_start) ** (epoch / (epochs - 1))


def _eval_d_stsp(p: PlrnnParams, mask: TopologyMask, dataset: Dataset, cfg: TrainConfig):
    """State-space divergence of a free-running orbit against the dataset."""
    from .errors import DivergenceError
    from .model import generate, latent_from_observation

    true = dataset.series
    n_dims = true.data.shape[1]
    z1 = latent_from_observation(true.data[0], p.m_dim)
    total = cfg.eval_transient + cfg.eval_gen_steps
    try:
        orbit = generate(p, mask, z1, total)
    except DivergenceError:
        return metrics.d_stsp_sentinel(n_dims)
    if orbit.diverged or orbit.data.shape[0] <= cfg.eval_transient:
        return metrics.d_stsp_sentinel(n_dims)
    return metrics.d_stsp(true, orbit.data[cfg.eval_transient :])


def train(
    dataset: Dataset,
    mask: TopologyMask,
    config: TrainConfig,
    params0: PlrnnParams | None = None,
) -> TrainResult:
    """Run the full training protocol on one dataset with a fixed mask.

    ``params0`` overrides the seeded initialization (used by iterative pruning
    to reset to the original draw). A non-finite loss aborts with
    :class:`TrainingFailureError` carrying the partial history.
    """
    data = dataset.series.data
    t_total, n_dim = data.shape
    if t_total <= config.seq_len:
        raise InvalidArgumentError("dataset length must exceed seq_len")
    if params0 is None:
        params = init_params(
            mask.m_dim, n_dim, config.init_sigma, derive_seed(config.seed, "init")
        )
    else:
        params = params0.copy()
    opt = radam_init(params)
    rng = np.random.default_rng(derive_seed(config.seed, "batches"))
    loss_history: list[float] = []
    d_hist: list[float] = []
    eval_epochs: list[int] = []
    best_d = math.inf
    best_params = params.copy()
    best_epoch = -1
    epoch_of_threshold: int | None = None
    for epoch in range(config.epochs):
        lr = anneal_lr(config.lr_start, config.lr_end, epoch, config.epochs)
        epoch_loss = 0.0
        for step in range(config.batches_per_epoch):
            starts = rng.integers(0, t_total - config.seq_len, size=config.batch_size)
            batch = np.ascontiguousarray(
                np.stack([data[s : s + config.seq_len] for s in starts])
            )
            wm = masked_weights(params, mask)
            states, phis, preds = _kernels.stf_forward_batch(
                params.a_diag, wm, params.h, batch, config.tau
            )
            loss = mse_loss(preds.transpose(1, 0, 2), batch[:, 1:, :])
            if not math.isfinite(loss):
                raise TrainingFailureError(
                    f"non-finite loss at epoch {epoch}, step {step}",
                    epoch=epoch,
                    step=step,
                    partial=loss_history,
                )
            da, dwm, dh = _kernels.bptt_backward_batch(
                params.a_diag, wm, states, phis, preds, batch, config.tau
            )
            grads = PlrnnGrads(a_diag=da, w=dwm * mask.bits, h=dh)
            if config.grad_clip is not None:
                norm = grads.global_norm()
                if norm > config.grad_clip:
                    grads.scale(config.grad_clip / norm)
            params, opt = radam_step(opt, params, grads, lr)
            epoch_loss += loss
        loss_history.append(epoch_loss / config.batches_per_epoch)
        last = epoch == config.epochs - 1
        if (epoch + 1) % config.eval_every == 0 or last:
            d = _eval_d_stsp(params, mask, dataset, config)
            d_hist.append(d)
            eval_epochs.append(epoch)
            if d < best_d:
                best_d = d
                best_params = params.copy()
                best_epoch = epoch
            if epoch_of_threshold is None and d < config.d_stsp_threshold:
                epoch_of_threshold = epoch
            if (
                config.early_stop_d_stsp is not None
                and d < config.early_stop_d_stsp
            ):
                break
    return TrainResult(
        best_params=best_params,
        best_d_stsp=best_d,
        loss_history=loss_history,
        d_stsp_history=d_hist,
        eval_epochs=eval_epochs,
        epoch_of_threshold=epoch_of_threshold,
        best_epoch=best_epoch,
    )
