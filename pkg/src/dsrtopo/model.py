"""Masked mean-centered PLRNN: state update, identity readout, generation.

The latent update is z' = A z + (m * W) relu(z - mean(z)) + h with diagonal A
and a binary mask m over W. Observations are the first N latent components.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .dynamics import Trajectory
from .errors import DivergenceError, InvalidArgumentError, MaskParseError

CHECKPOINT_VERSION = 1
MASK_HEADER = "# dsrtopo-mask v1"

# States beyond this magnitude during free-running generation count as diverged.
DIVERGENCE_GUARD = 1e6


@dataclass
class PlrnnParams:
    """Model parameters: diagonal A, full W, bias h, latent/readout dims."""

    a_diag: np.ndarray
    w: np.ndarray
    h: np.ndarray
    m_dim: int
    n_dim: int

    def __post_init__(self):
        self.a_diag = np.ascontiguousarray(self.a_diag, dtype=np.float64)
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.h = np.ascontiguousarray(self.h, dtype=np.float64)
        m = self.m_dim
        if self.a_diag.shape != (m,) or self.w.shape != (m, m) or self.h.shape != (m,):
            raise InvalidArgumentError("parameter shapes do not match m_dim")
        if not (1 <= self.n_dim <= m):
            raise InvalidArgumentError("need 1 <= n_dim <= m_dim")
        if not (
            np.all(np.isfinite(self.a_diag))
            and np.all(np.isfinite(self.w))
            and np.all(np.isfinite(self.h))
        ):
            raise InvalidArgumentError("parameters must be finite")

    def copy(self) -> "PlrnnParams":
        return PlrnnParams(
            self.a_diag.copy(), self.w.copy(), self.h.copy(), self.m_dim, self.n_dim
        )


@dataclass
class TopologyMask:
    """Binary M x M mask over W; doubles as a directed adjacency matrix."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or bits.shape[0] != bits.shape[1]:
            raise InvalidArgumentError("mask must be a square matrix")
        if not np.all((bits == 0) | (bits == 1)):
            raise InvalidArgumentError("mask entries must be 0 or 1")
        self.bits = np.ascontiguousarray(bits, dtype=np.uint8)

    @classmethod
    def full(cls, m_dim: int) -> "TopologyMask":
        return cls(np.ones((m_dim, m_dim), dtype=np.uint8))

    @property
    def m_dim(self) -> int:
        return self.bits.shape[0]

    @property
    def n_active(self) -> int:
        return int(self.bits.sum())

    @property
    def sparsity(self) -> float:
        return 1.0 - self.n_active / self.bits.size

    def copy(self) -> "TopologyMask":
        return TopologyMask(self.bits.copy())


def masked_weights(p: PlrnnParams, mask: TopologyMask) -> np.ndarray:
    """Effective weight matrix m * W as a contiguous float64 array."""
    if mask.m_dim != p.m_dim:
        raise InvalidArgumentError("mask dimension does not match parameters")
    return np.ascontiguousarray(p.w * mask.bits)


def mean_center(z: np.ndarray) -> np.ndarray:
    """Subtract the component mean; the output sums to zero."""
    z = np.asarray(z, dtype=np.float64)
    return z - z.mean()


def plrnn_step(p: PlrnnParams, mask: TopologyMask, z: np.ndarray) -> np.ndarray:
    """One masked PLRNN update. Pure; non-finite inputs propagate."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.shape != (p.m_dim,):
        raise InvalidArgumentError(f"state has shape {z.shape}, expected ({p.m_dim},)")
    wm = masked_weights(p, mask)
    return _kernels.plrnn_step_n_batch(p.a_diag, wm, p.h, z[None, :], 1)[0]


def observe(z: np.ndarray, n_dim: int) -> np.ndarray:
    """Identity observation model: the first n_dim latent components."""
    z = np.asarray(z)
    if n_dim > z.shape[-1]:
        raise InvalidArgumentError("n_dim exceeds latent dimension")
    return z[..., :n_dim]


def generate(
    p: PlrnnParams,
    mask: TopologyMask,
    z1: np.ndarray,
    n_steps: int,
    dt: float = 1.0,
) -> Trajectory:
    """Free-run the model from ``z1`` and return the observed trajectory.

    Emits observe(z_t) for the ``n_steps`` states after ``z1``. If a state
    goes non-finite or exceeds the divergence guard the trajectory is
    truncated and flagged; divergence on the very first step raises.
    """
    if n_steps < 1:
        raise InvalidArgumentError("n_steps must be >= 1")
    z1 = np.ascontiguousarray(z1, dtype=np.float64)
    if z1.shape != (p.m_dim,):
        raise InvalidArgumentError(f"z1 has shape {z1.shape}, expected ({p.m_dim},)")
    wm = masked_weights(p, mask)
    latents, n_valid = _kernels.plrnn_orbit(
        p.a_diag, wm, p.h, z1, n_steps, DIVERGENCE_GUARD
    )
    if n_valid == 0:
        raise DivergenceError("model diverged on the first step", last_valid_index=0)
    data = observe(latents[:n_valid], p.n_dim)
    return Trajectory(
        data=np.array(data), dt=dt, meta="plrnn", diverged=n_valid < n_steps
    )


def latent_from_observation(x: np.ndarray, m_dim: int) -> np.ndarray:
    """Forced initial latent state: observed components from x, hidden zeros."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] > m_dim:
        raise InvalidArgumentError("observation longer than latent dimension")
    z = np.zeros(m_dim)
    z[: x.shape[0]] = x
    return z


def save_checkpoint(
    p: PlrnnParams, mask: TopologyMask, path: str | Path
) -> None:
    """Persist parameters plus mask as versioned JSON."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "m_dim": p.m_dim,
        "n_dim": p.n_dim,
        "a_diag": [float(v) for v in p.a_diag],
        "w": [float(v) for v in p.w.ravel()],
        "h": [float(v) for v in p.h],
        "mask": [int(v) for v in mask.bits.ravel()],
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def load_checkpoint(path: str | Path) -> tuple[PlrnnParams, TopologyMask]:
    payload = json.loads(Path(path).read_text())
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise InvalidArgumentError(f"unsupported checkpoint version: {version}")
    m = payload["m_dim"]
    params = PlrnnParams(
        a_diag=np.array(payload["a_diag"]),
        w=np.array(payload["w"]).reshape(m, m),
        h=np.array(payload["h"]),
        m_dim=m,
        n_dim=payload["n_dim"],
    )
    mask = TopologyMask(np.array(payload["mask"], dtype=np.uint8).reshape(m, m))
    return params, mask


def save_mask(mask: TopologyMask, path: str | Path) -> None:
    """Write a mask as a row-major bit matrix with an M/sparsity header."""
    lines = [f"{MASK_HEADER} M={mask.m_dim} sparsity={mask.sparsity:.6f}"]
    for row in mask.bits:
        lines.append("".join(str(int(b)) for b in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_mask(path: str | Path) -> TopologyMask:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(MASK_HEADER):
        raise MaskParseError(f"{path}: missing mask header", line_no=1)
    try:
        m_dim = int(lines[0].split("M=")[1].split()[0])
    except (IndexError, ValueError) as exc:
        raise MaskParseError(f"{path}: malformed header: {lines[0]!r}", line_no=1) from exc
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if len(line) != m_dim or any(ch not in "01" for ch in line):
            raise MaskParseError(
                f"{path}: line {i}: expected {m_dim} bits, got {line!r}", line_no=i
            )
        rows.append([int(ch) for ch in line])
    if len(rows) != m_dim:
        raise MaskParseError(
            f"{path}: expected {m_dim} rows, got {len(rows)}", line_no=len(lines)
        )
    return TopologyMask(np.array(rows, dtype=np.uint8))
