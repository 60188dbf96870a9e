"""Sequence embeddings, the pooled projection head, and the training losses.

Everything here is plain numpy with hand-written backward passes. Each
``*_backward`` function is the vector-Jacobian product of its forward
counterpart; ``grad_check`` verifies any (value, grad) closure against
central finite differences.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# Below this, a vector is treated as zero-norm for cosine similarity.
_NORM_EPS = 1e-12


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.1
    contrastive_weight: float = 1.0
    include_positive_in_denominator: bool = False

    def __post_init__(self) -> None:
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.contrastive_weight < 0.0:
            raise ValueError(f"contrastive_weight must be >= 0, got {self.contrastive_weight}")


@dataclass(frozen=True)
class LossReport:
    """The combined objective and its parts for one batch or example."""

    cross_entropy: float
    contrastive: float
    total: float
    contrastive_weight: float

    def __post_init__(self) -> None:
        if self.cross_entropy < 0.0:
            raise ValueError(f"cross-entropy must be >= 0, got {self.cross_entropy}")
        if not math.isfinite(self.total):
            raise ValueError(f"total loss must be finite, got {self.total}")


def combined_loss(cross_entropy: float, contrastive: float, cfg: ContrastiveConfig) -> LossReport:
    """Weighted sum of the two loss terms; the contrastive term may be negative."""
    return LossReport(
        cross_entropy=float(cross_entropy),
        contrastive=float(contrastive),
        total=float(cross_entropy + cfg.contrastive_weight * contrastive),
        contrastive_weight=float(cfg.contrastive_weight),
    )


@dataclass
class ProjectionParams:
    """Affine map applied to every token column before ReLU and mean-pooling."""

    weight: np.ndarray  # (d, d)
    bias: np.ndarray  # (d,)

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.weight.shape[0] != self.weight.shape[1]:
            raise ValueError(f"weight must be square, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"bias shape {self.bias.shape} does not match weight {self.weight.shape}")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("projection parameters must be finite")

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "ProjectionParams":
        # Bounded uniform init keeps a healthy share of ReLU units active.
        bound = 1.0 / math.sqrt(dim)
        return cls(weight=rng.uniform(-bound, bound, size=(dim, dim)), bias=np.zeros(dim))

    def copy(self) -> "ProjectionParams":
        return ProjectionParams(weight=self.weight.copy(), bias=self.bias.copy())


def embed_sequence(token_ids: Sequence[int], table: np.ndarray) -> np.ndarray:
    """Stack embedding-table columns for a token-id sequence, d x l."""
    table = np.asarray(table, dtype=np.float64)
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("token id sequence must be non-empty 1-d")
    if ids.min() < 0 or ids.max() >= table.shape[1]:
        raise ValueError(f"token id out of range for vocabulary of {table.shape[1]}")
    return table[:, ids]


def project(columns: np.ndarray, params: ProjectionParams) -> np.ndarray:
    """ReLU(weight @ columns + bias), mean-pooled over the sequence axis.

    The result is in R^d for any sequence length and is elementwise
    non-negative because pooling averages ReLU outputs.
    """
    columns = np.asarray(columns, dtype=np.float64)
    if columns.ndim != 2 or columns.shape[0] != params.dim:
        raise ValueError(f"columns must be ({params.dim}, l), got {columns.shape}")
    if columns.shape[1] == 0:
        raise ValueError("cannot project an empty sequence")
    pre = params.weight @ columns + params.bias[:, None]
    return np.maximum(pre, 0.0).mean(axis=1)


def project_backward(
    columns: np.ndarray, params: ProjectionParams, dh: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """VJP of ``project``: gradients for weight, bias, and the input columns."""
    columns = np.asarray(columns, dtype=np.float64)
    dh = np.asarray(dh, dtype=np.float64)
    length = columns.shape[1]
    pre = params.weight @ columns + params.bias[:, None]
    # d/dpre of mean(relu(pre), axis=1): dh/l through the active units.
    dpre = (dh[:, None] / length) * (pre > 0.0)
    dw = dpre @ columns.T
    db = dpre.sum(axis=1)
    dcols = params.weight.T @ dpre
    return dw, db, dcols


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """a . b / (|a||b|); a zero-norm argument yields 0.0 with a warning."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"vectors must share a 1-d shape, got {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= _NORM_EPS or nb <= _NORM_EPS:
        warnings.warn("cosine_sim of a zero-norm vector, returning 0.0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(a @ b) / (na * nb)


def cosine_backward(a: np.ndarray, b: np.ndarray, ds: float) -> tuple[np.ndarray, np.ndarray]:
    """VJP of ``cosine_sim`` for both arguments; zero at the zero-norm fallback."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= _NORM_EPS or nb <= _NORM_EPS:
        return np.zeros_like(a), np.zeros_like(b)
    s = float(a @ b) / (na * nb)
    da = ds * (b / (na * nb) - s * a / (na * na))
    db = ds * (a / (na * nb) - s * b / (nb * nb))
    return da, db


def logsumexp(values: Sequence[float]) -> float:
    """Max-subtracted log-sum-exp; exact ln(K) on K equal inputs."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("logsumexp of an empty set")
    m = float(np.max(x))
    return m + float(np.log(np.sum(np.exp(x - m))))


def softmax(values: Sequence[float]) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    e = np.exp(x - np.max(x))
    return e / e.sum()


def softmax_backward(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    """VJP through softmax given its output p: dz = p * (dp - p . dp)."""
    p = np.asarray(p, dtype=np.float64)
    dp = np.asarray(dp, dtype=np.float64)
    return p * (dp - float(p @ dp))


def contrastive_loss(
    h_anchor: np.ndarray,
    h_pos: np.ndarray,
    h_negs: Sequence[np.ndarray],
    cfg: ContrastiveConfig,
) -> float:
    """-sim(pos, anchor)/T plus log-sum-exp of the scaled denominator sims.

    The denominator covers the negatives; the positive joins it only when
    the config says so. At least one negative is required.
    """
    if len(h_negs) == 0:
        raise ValueError("contrastive loss needs at least one negative")
    t = cfg.temperature
    s_pos = cosine_sim(h_pos, h_anchor)
    denom = [cosine_sim(h, h_anchor) / t for h in h_negs]
    if cfg.include_positive_in_denominator:
        denom.append(s_pos / t)
    return -s_pos / t + logsumexp(denom)


def contrastive_backward(
    h_anchor: np.ndarray,
    h_pos: np.ndarray,
    h_negs: Sequence[np.ndarray],
    cfg: ContrastiveConfig,
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Gradients of ``contrastive_loss`` for the anchor, positive, and negatives."""
    if len(h_negs) == 0:
        raise ValueError("contrastive loss needs at least one negative")
    t = cfg.temperature
    s_pos = cosine_sim(h_pos, h_anchor)
    denom = [cosine_sim(h, h_anchor) / t for h in h_negs]
    if cfg.include_positive_in_denominator:
        denom.append(s_pos / t)
    w = softmax(denom)

    d_anchor = np.zeros_like(np.asarray(h_anchor, dtype=np.float64))
    ds_pos = -1.0 / t
    if cfg.include_positive_in_denominator:
        ds_pos += float(w[-1]) / t
    d_pos, da = cosine_backward(h_pos, h_anchor, ds_pos)
    d_anchor += da
    d_negs = []
    for h, wi in zip(h_negs, w):
        dn, da = cosine_backward(h, h_anchor, float(wi) / t)
        d_negs.append(dn)
        d_anchor += da
    return d_anchor, d_pos, d_negs


def cross_entropy_loss(target_probs: Sequence[float]) -> float:
    """Mean negative log probability of the realized answer tokens."""
    p = np.asarray(target_probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("target probabilities must be a non-empty 1-d sequence")
    if np.any(p <= 0.0) or np.any(p > 1.0):
        raise ValueError("target probabilities must lie in (0, 1]")
    return float(np.mean(-np.log(p)))


def grad_check(
    fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    point: np.ndarray,
    epsilon: float = 1e-5,
) -> float:
    """Max relative disagreement between fn's gradient and central differences.

    ``fn`` maps a flat parameter vector to (loss, analytic gradient). The
    per-coordinate denominator is max(1, |numeric|, |analytic|) so that
    finite-difference noise near zero does not dominate the ratio.
    """
    point = np.asarray(point, dtype=np.float64)
    value, grad = fn(point)
    if not math.isfinite(value):
        raise ValueError(f"loss is not finite at the probe point: {value}")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != point.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match input {point.shape}")
    worst = 0.0
    flat = point.ravel()
    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = epsilon
        hi, _ = fn((flat + bump).reshape(point.shape))
        lo, _ = fn((flat - bump).reshape(point.shape))
        numeric = (hi - lo) / (2.0 * epsilon)
        analytic = float(grad.ravel()[i])
        denom = max(1.0, abs(numeric), abs(analytic))
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
