"""Weight-matrix diagnostics for attention projections across checkpoints."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError

KINDS = ("Q", "K", "V", "O")
EPS = 1e-12


@dataclass(frozen=True)
class WeightMatrix:
    layer: int
    kind: str
    checkpoint_step: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"weight matrix must be 2-D and nonempty, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("weight matrix has non-finite entries")
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "data", data)

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class SpectralSummary:
    frobenius: float
    entry_mean: float
    entry_std: float
    sigma_max: float
    sigma_min: float
    condition: float
    effective_rank: int


def _arr(W):
    if isinstance(W, WeightMatrix):
        return W.data
    return np.asarray(W, dtype=np.float64)


def frobenius(W) -> float:
    a = _arr(W).ravel()
    # scaled to avoid overflow/underflow in the squares
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0:
        return 0.0
    return scale * math.sqrt(float(np.sum((a / scale) ** 2)))


def entry_stats(W) -> tuple[float, float]:
    """Population mean and standard deviation of all entries."""
    a = _arr(W).ravel()
    mean = float(np.mean(a))
    return mean, float(np.sqrt(np.mean((a - mean) ** 2)))


def cosine_similarity(W_t, W_prev) -> float:
    """Cosine between the row-major flattenings of two equally shaped matrices."""
    a, b = _arr(W_t), _arr(W_prev)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    na, nb = frobenius(a), frobenius(b)
    if na == 0 or nb == 0:
        raise DomainError("cosine similarity undefined for a zero matrix")
    c = float(np.dot((a / na).ravel(order="C"), (b / nb).ravel(order="C")))
    return max(-1.0, min(1.0, c))


def singular_values(W) -> np.ndarray:
    """All min(rows, cols) singular values in descending order."""
    s = np.linalg.svd(_arr(W), compute_uv=False)
    return np.sort(np.clip(s, 0.0, None))[::-1]


def condition_number(sv, eps: float = EPS) -> float:
    sv = np.asarray(sv, dtype=float)
    if sv.size == 0:
        raise DomainError("condition number of an empty spectrum")
    return float(sv[0] / (sv[-1] + eps))


def effective_rank(sv, tau: float = 0.99) -> int:
    """Smallest k whose leading k squared singular values reach ``tau`` of the total."""
    sv = np.asarray(sv, dtype=float)
    if sv.size == 0:
        raise DomainError("effective rank of an empty spectrum")
    if not 0 < tau <= 1:
        raise DomainError(f"tau must lie in (0, 1], got {tau}")
    top = float(np.max(sv))
    if top == 0:
        raise DomainError("effective rank undefined for an all-zero spectrum")
    energy = (sv / top) ** 2  # scaled so tiny spectra do not underflow
    total = math.fsum(energy)
    running = 0.0
    for k, e in enumerate(energy, 1):
        running += e
        if running / total >= tau:
            return k
    return sv.size


def qk_ratio(W_Q, W_K) -> float:
    nk = frobenius(W_K)
    if nk == 0:
        raise DomainError("Q/K ratio undefined: key matrix has zero norm")
    return frobenius(W_Q) / nk


def summarize(W, tau: float = 0.99, eps: float = EPS) -> SpectralSummary:
    sv = singular_values(W)
    mean, std = entry_stats(W)
    return SpectralSummary(
        frobenius=frobenius(W),
        entry_mean=mean,
        entry_std=std,
        sigma_max=float(sv[0]),
        sigma_min=float(sv[-1]),
        condition=condition_number(sv, eps),
        # 0 flags an all-zero matrix, whose effective rank is undefined
        effective_rank=effective_rank(sv, tau) if sv[0] > 0 else 0,
    )


def head_blocks(W, n_heads: int) -> list[np.ndarray]:
    """Column blocks of width cols / n_heads, one per attention head."""
    a = _arr(W)
    if n_heads < 1 or a.shape[1] % n_heads:
        raise ValidationError(f"{a.shape[1]} columns do not split into {n_heads} heads")
    w = a.shape[1] // n_heads
    return [a[:, h * w:(h + 1) * w] for h in range(n_heads)]


def spectral_report(matrices, gaps=(), tau: float = 0.99, eps: float = EPS, n_heads: int | None = None):
    """Summaries, consecutive-step cosines and Q/K ratios for a checkpoint set.

    ``matrices`` maps ``(step, layer, kind)`` to a matrix. Returns three row
    lists sorted by (step, layer, kind); missing matrices listed in ``gaps``
    become rows with ``status="missing"``. With ``n_heads`` every summary is
    repeated per head-sized column block (``head`` = 0..n_heads-1; the full
    matrix has ``head`` = -1).
    """
    order = {k: i for i, k in enumerate(KINDS)}

    def key(t):
        return (t[0], t[1], order[t[2]])

    summary_rows = []
    for step, layer, kind in sorted(set(matrices) | set(gaps), key=key):
        W = matrices.get((step, layer, kind))
        if W is None:
            summary_rows.append({"step": step, "layer": layer, "kind": kind, "head": -1,
                                 "status": "missing"})
            continue
        parts = [(-1, _arr(W))]
        if n_heads:
            parts += list(enumerate(head_blocks(W, n_heads)))
        for head, block in parts:
            s = summarize(block, tau, eps)
            summary_rows.append({"step": step, "layer": layer, "kind": kind, "head": head,
                                 "status": "ok", **s.__dict__})

    steps = sorted({k[0] for k in matrices})
    cosine_rows = []
    for prev, cur in zip(steps, steps[1:]):
        for (step, layer, kind) in sorted(matrices, key=key):
            if step != cur or (prev, layer, kind) not in matrices:
                continue
            a, b = matrices[(cur, layer, kind)], matrices[(prev, layer, kind)]
            cosine_rows.append({"step_prev": prev, "step": cur, "layer": layer, "kind": kind,
                                "cosine": cosine_similarity(a, b)})

    qk_rows = []
    for (step, layer, kind) in sorted(matrices, key=key):
        if kind == "Q" and (step, layer, "K") in matrices:
            qk_rows.append({"step": step, "layer": layer,
                            "qk_ratio": qk_ratio(matrices[(step, layer, "Q")],
                                                 matrices[(step, layer, "K")])})
    return summary_rows, cosine_rows, qk_rows
