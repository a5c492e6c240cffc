"""Per-pixel anomaly scorers.

Every scorer returns higher values for more anomalous pixels. The two
probability-based scores also carry a log-domain companion computed
directly from clamped log terms, which stays usable where the linear
product underflows float32:

    unknown score            S = prod_k (1 - p_k)
    unknown objectness score S = p_obj * prod_k (1 - p_k)

with each factor clamped to at least CLAMP_EPS before the log. The
objectness factor is <= 1, so the second score never exceeds the first
on any pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .tensor_io import LogitMap, ProbMap

CLAMP_EPS = 1e-7

METHODS = ("us", "uos", "entropy", "maxlogit")


@dataclass(frozen=True)
class ScoreMap:
    """A (height, width) float32 score image; higher means more anomalous.

    ``log_values`` is the log-domain companion when the method defines
    one (the probability-product scores), else None.
    """

    values: np.ndarray
    log_values: np.ndarray | None
    method: str

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValidationError(f"scores must be (H, W), got {self.values.shape}")
        if self.log_values is not None and self.log_values.shape != self.values.shape:
            raise ValidationError("log companion shape mismatch")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _log_complement_sum(predefined: np.ndarray, eps: float) -> np.ndarray:
    # sum_k ln(max(1 - p_k, eps)), computed in float32 without temporaries
    # larger than one (H, W, K) scratch buffer.
    t = predefined.astype(np.float32, copy=True)
    np.subtract(np.float32(1.0), t, out=t)
    np.maximum(t, np.float32(eps), out=t)
    np.log(t, out=t)
    return t.sum(axis=2, dtype=np.float32)


def _checked_class_probs(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] < 1:
        raise ValidationError(f"expected (H, W, K) probabilities, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError("probabilities must be finite")
    if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
        raise ValidationError("probabilities must lie in [0, 1]")
    return arr


def unknown_score(probs, eps: float = CLAMP_EPS) -> ScoreMap:
    """Probability that no predefined class claims the pixel.

    Accepts a ProbMap (class channels then object channel) or a raw
    (H, W, K) array holding class probabilities only.
    """
    pk = probs.predefined if isinstance(probs, ProbMap) else _checked_class_probs(probs)
    log_s = _log_complement_sum(pk, eps)
    return ScoreMap(np.exp(log_s), log_s, "us")


def unknown_objectness_score(probs: ProbMap, eps: float = CLAMP_EPS) -> ScoreMap:
    """Unknown score gated by the class-agnostic object probability.

    Requires a full ProbMap; there is no object-free variant.
    """
    if not isinstance(probs, ProbMap):
        raise ValidationError("unknown objectness needs a ProbMap with an object channel")
    log_s = _log_complement_sum(probs.predefined, eps)
    log_s += np.log(np.maximum(probs.objectness, np.float32(eps)))
    return ScoreMap(np.exp(log_s), log_s, "uos")


def softmax_entropy(logits: LogitMap, k: int | None = None) -> ScoreMap:
    """Entropy of the softmax over the first k channels (all by default).

    Uses H = ln Z - E[shifted logit], which handles zero probabilities
    without special cases.
    """
    values = logits.values
    if k is None:
        k = values.shape[2]
    if not 1 <= k <= values.shape[2]:
        raise ValidationError(f"k={k} outside 1..{values.shape[2]}")
    z = values[:, :, :k]
    m = z.max(axis=2, keepdims=True)
    shifted = z - m
    e = np.exp(shifted)
    total = e.sum(axis=2)
    ent = np.log(total) - (e * shifted).sum(axis=2) / total
    return ScoreMap(ent.astype(np.float32), None, "entropy")


def max_logit(logits: LogitMap, k: int | None = None) -> ScoreMap:
    """Negated maximum over the first k channels, so higher is anomalous."""
    values = logits.values
    if k is None:
        k = values.shape[2]
    if not 1 <= k <= values.shape[2]:
        raise ValidationError(f"k={k} outside 1..{values.shape[2]}")
    return ScoreMap(-values[:, :, :k].max(axis=2), None, "maxlogit")
