"""Boundary-weighted multi-label binary cross-entropy and its gradient.

The loss runs over the k predefined channels plus the object channel of
every counted (non-ignored) pixel i:

    L = (1/N) * sum_i inner_i  +  (lam / sum_i d_i) * sum_i d_i * inner_i

where inner_i is the summed per-channel cross-entropy at pixel i, N is
the number of counted pixels, and d_i is the boundary indicator. When no
counted pixel is on a boundary the second term is zero. Probabilities
are clamped to [eps, 1-eps] inside the log only.

All reductions run in float64 with numpy's deterministic pairwise
summation, so a given input always produces the same value.

The gradient is taken with respect to pre-sigmoid logits z, treating the
clamp as inactive:

    dL/dz_ic = w_i * (sigmoid(z_ic) - y_ic),  w_i = 1/N + lam * d_i / sum(d)

with w_i = 1/N when sum(d) = 0 and w_i = 0 on ignored pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateError, ShapeError, ValidationError
from .labels import LabelMap
from .tensor_io import LogitMap, ProbMap


@dataclass(frozen=True)
class LossConfig:
    lam: float = 3.0          # weight of the boundary term
    clamp_eps: float = 1e-7   # probability clamp inside the logs
    printed_form: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValidationError(f"lam {self.lam} must be >= 0")
        if not 0 < self.clamp_eps < 0.5:
            raise ValidationError(f"clamp_eps {self.clamp_eps} outside (0, 0.5)")


@dataclass(frozen=True)
class LossValue:
    total: float
    base_term: float
    boundary_term: float
    n_counted: int


def bce_elementwise(y, p, eps: float = 1e-7):
    """-(y ln p + (1-y) ln(1-p)) with p clamped to [eps, 1-eps]."""
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def _elementwise(y, p, cfg: LossConfig):
    if not cfg.printed_form:
        return bce_elementwise(y, p, cfg.clamp_eps)
    # Variant with the complement term written as (1-y)(1 - ln p); kept
    # selectable for comparison, never used for training.
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(p, dtype=np.float64), cfg.clamp_eps, 1.0 - cfg.clamp_eps)
    return -(y * np.log(p) + (1.0 - y) * (1.0 - np.log(p)))


def _check_flat(p: np.ndarray, y: np.ndarray, delta: np.ndarray, counted: np.ndarray):
    if p.ndim != 2 or p.shape != y.shape:
        raise ShapeError(f"probs {p.shape} and targets {y.shape} must match (n, c)")
    if delta.shape != (p.shape[0],) or counted.shape != (p.shape[0],):
        raise ShapeError("delta and counted must be (n,)")


def boundary_loss_flat(
    p: np.ndarray,
    y: np.ndarray,
    delta: np.ndarray,
    counted: np.ndarray,
    cfg: LossConfig = LossConfig(),
) -> LossValue:
    """Loss over a flat batch: p and y are (n, c), delta and counted (n,)."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    counted = np.asarray(counted, dtype=bool)
    _check_flat(p, y, delta, counted)
    n = int(counted.sum())
    if n == 0:
        raise DegenerateError("no counted pixels")
    inner = _elementwise(y, p, cfg).sum(axis=1)
    inner = np.where(counted, inner, 0.0)
    d = np.where(counted, delta, 0.0)
    base = float(inner.sum() / n)
    dsum = float(d.sum())
    boundary = float(cfg.lam * (inner * d).sum() / dsum) if dsum > 0 else 0.0
    return LossValue(base + boundary, base, boundary, n)


def boundary_loss_grad_flat(
    z: np.ndarray,
    y: np.ndarray,
    delta: np.ndarray,
    counted: np.ndarray,
    cfg: LossConfig = LossConfig(),
) -> np.ndarray:
    """Gradient of the loss with respect to flat logits z, shape (n, c)."""
    if cfg.printed_form:
        raise ValidationError("no gradient for the printed form")
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    counted = np.asarray(counted, dtype=bool)
    _check_flat(z, y, delta, counted)
    n = int(counted.sum())
    if n == 0:
        raise DegenerateError("no counted pixels")
    d = np.where(counted, delta, 0.0)
    dsum = d.sum()
    w = np.full(z.shape[0], 1.0 / n)
    if dsum > 0:
        w += cfg.lam * d / dsum
    w[~counted] = 0.0
    return w[:, None] * (expit(z) - y)


def boundary_aware_loss(
    probs: ProbMap,
    labels: LabelMap,
    delta: np.ndarray,
    cfg: LossConfig = LossConfig(),
) -> LossValue:
    """Loss over a full map; delta is the (H, W) boundary indicator."""
    if (probs.height, probs.width) != (labels.height, labels.width):
        raise ShapeError("probability and label maps differ in size")
    if probs.k_predefined != labels.k:
        raise ShapeError(
            f"{probs.k_predefined} predefined channels vs k={labels.k} labels"
        )
    delta = np.asarray(delta)
    if delta.shape != labels.mask.shape:
        raise ShapeError(f"delta shape {delta.shape} != {labels.mask.shape}")
    c = labels.k + 1
    return boundary_loss_flat(
        probs.values.reshape(-1, c),
        labels.multihot().reshape(-1, c),
        delta.reshape(-1),
        ~labels.ignore().reshape(-1),
        cfg,
    )


def boundary_aware_loss_grad(
    logits: LogitMap,
    labels: LabelMap,
    delta: np.ndarray,
    cfg: LossConfig = LossConfig(),
) -> np.ndarray:
    """Gradient with respect to a full (H, W, k+1) logit map."""
    if (logits.height, logits.width) != (labels.height, labels.width):
        raise ShapeError("logit and label maps differ in size")
    if logits.channels != labels.k + 1:
        raise ShapeError(f"{logits.channels} channels vs k+1={labels.k + 1}")
    delta = np.asarray(delta)
    if delta.shape != labels.mask.shape:
        raise ShapeError(f"delta shape {delta.shape} != {labels.mask.shape}")
    c = labels.k + 1
    grad = boundary_loss_grad_flat(
        logits.values.reshape(-1, c).astype(np.float64),
        labels.multihot().reshape(-1, c),
        delta.reshape(-1),
        ~labels.ignore().reshape(-1),
        cfg,
    )
    return grad.reshape(logits.height, logits.width, c)
