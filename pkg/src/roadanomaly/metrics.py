"""Ranking metrics over pooled pixel scores, exact and streaming.

All three metrics reduce to cumulative true/false positive counts taken
at every distinct score value in descending order, with tied scores
always admitted together. The exact path builds those counts from a full
sort; the streaming path builds them from a fixed-width histogram so a
dataset never has to be held in memory at once. Counts are integers
until the final divisions, so results are reproducible bit for bit.

    auroc   trapezoidal area under the ROC curve; equals the rank
            statistic that counts score ties between the classes as 1/2
    ap      non-interpolated average precision, sum of precision times
            recall increment over descending thresholds
    fpr95   false-positive rate at the first descending threshold whose
            true-positive rate reaches 0.95

Metrics are pooled: scores from many images are ranked against each
other, never averaged per image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, ShapeError, ValidationError
from .labels import GT_EXCLUDED, GT_NOT_OBSTACLE, GT_OBSTACLE
from .scoring import ScoreMap

DEFAULT_BINS = 65536


def _as_flat_scores(scores, positives):
    s = np.asarray(scores).reshape(-1)
    y = np.asarray(positives).reshape(-1).astype(bool)
    if s.shape != y.shape:
        raise ShapeError(f"{s.size} scores vs {y.size} labels")
    if not np.isfinite(s).all():
        raise ValidationError("scores must be finite")
    return s.astype(np.float64, copy=False), y


def _cumulative_counts(scores, positives):
    """Cumulative (tp, fp) int64 arrays at distinct descending scores."""
    order = np.argsort(scores, kind="stable")[::-1]
    s = scores[order]
    y = positives[order]
    last = np.nonzero(np.diff(s))[0]
    idx = np.concatenate([last, [s.size - 1]])
    tps = np.cumsum(y.astype(np.int64))[idx]
    fps = (idx + 1) - tps
    return tps, fps


def _auroc_from_counts(tps: np.ndarray, fps: np.ndarray) -> float:
    p = int(tps[-1])
    n = int(fps[-1])
    if p == 0 or n == 0:
        raise DegenerateError("auroc needs both classes")
    dfp = np.diff(np.concatenate([[0], fps]))
    tsum = tps + np.concatenate([[0], tps[:-1]])
    twice_area = int((dfp * tsum).sum())
    return twice_area / (2 * p * n)


def _ap_from_counts(tps: np.ndarray, fps: np.ndarray) -> float:
    p = int(tps[-1])
    if p == 0:
        raise DegenerateError("average precision needs positives")
    recall = tps / p
    precision = tps / (tps + fps)
    dr = recall - np.concatenate([[0.0], recall[:-1]])
    return math.fsum(dr * precision)


def _fpr95_from_counts(tps: np.ndarray, fps: np.ndarray) -> float:
    p = int(tps[-1])
    n = int(fps[-1])
    if p == 0 or n == 0:
        raise DegenerateError("fpr at fixed tpr needs both classes")
    hit = np.nonzero(tps / p >= 0.95)[0]
    return int(fps[hit[0]]) / n


def auroc(scores, positives) -> float:
    s, y = _as_flat_scores(scores, positives)
    return _auroc_from_counts(*_cumulative_counts(s, y))


def average_precision(scores, positives) -> float:
    s, y = _as_flat_scores(scores, positives)
    return _ap_from_counts(*_cumulative_counts(s, y))


def fpr_at_95_tpr(scores, positives) -> float:
    s, y = _as_flat_scores(scores, positives)
    return _fpr95_from_counts(*_cumulative_counts(s, y))


class ScoreHistogram:
    """Fixed-range histogram of scores split by class.

    Scores map to bins by the monotone affine rule
    ``floor((x - lo) * bins / (hi - lo))`` clipped into range, so ranking
    metrics computed from the histogram treat every score inside a bin
    as tied. Counters are integers; merging partial histograms is exact
    and order-independent.
    """

    def __init__(self, lo: float, hi: float, bins: int = DEFAULT_BINS):
        if bins < 1:
            raise ValidationError(f"bins {bins} must be >= 1")
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
            raise ValidationError(f"bad range [{lo}, {hi}]")
        self.lo = float(lo)
        self.hi = float(hi)
        self.bins = int(bins)
        self.pos = np.zeros(bins, dtype=np.int64)
        self.neg = np.zeros(bins, dtype=np.int64)

    def _bin_index(self, scores: np.ndarray) -> np.ndarray:
        if self.hi == self.lo:
            return np.zeros(scores.shape, dtype=np.int64)
        idx = np.floor((scores - self.lo) * (self.bins / (self.hi - self.lo)))
        return np.clip(idx, 0, self.bins - 1).astype(np.int64)

    def add(self, scores, positives) -> None:
        s, y = _as_flat_scores(scores, positives)
        idx = self._bin_index(s)
        self.pos += np.bincount(idx[y], minlength=self.bins)
        self.neg += np.bincount(idx[~y], minlength=self.bins)

    def merge(self, other: "ScoreHistogram") -> None:
        if (other.lo, other.hi, other.bins) != (self.lo, self.hi, self.bins):
            raise ValidationError("histogram layouts differ")
        self.pos += other.pos
        self.neg += other.neg

    def _counts(self):
        pos = self.pos[::-1]
        neg = self.neg[::-1]
        occupied = (pos + neg) > 0
        if not occupied.any():
            raise DegenerateError("empty histogram")
        tps = np.cumsum(pos[occupied])
        fps = np.cumsum(neg[occupied])
        return tps, fps

    def auroc(self) -> float:
        return _auroc_from_counts(*self._counts())

    def average_precision(self) -> float:
        return _ap_from_counts(*self._counts())

    def fpr_at_95_tpr(self) -> float:
        return _fpr95_from_counts(*self._counts())


@dataclass
class EvalReport:
    """Pooled metrics plus the pixel counts they were computed from."""

    method: str
    mode: str
    auroc: float
    ap: float
    fpr95: float
    n_obstacle: int
    n_not_obstacle: int
    n_excluded: int
    bins: int | None = None
    miou: float | None = None

    _FIELDS = (
        "method", "mode", "auroc", "ap", "fpr95",
        "n_obstacle", "n_not_obstacle", "n_excluded", "bins", "miou",
    )

    def to_kv_text(self) -> str:
        lines = []
        for name in self._FIELDS:
            value = getattr(self, name)
            if value is None:
                continue
            lines.append(f"{name}={value}")
        return "\n".join(lines) + "\n"

    def to_json_line(self) -> str:
        record = {n: getattr(self, n) for n in self._FIELDS if getattr(self, n) is not None}
        return json.dumps(record, sort_keys=True)


def _score_values(entry, prefer_log: bool) -> np.ndarray:
    if isinstance(entry, ScoreMap):
        if prefer_log and entry.log_values is not None:
            return entry.log_values
        return entry.values
    return np.asarray(entry)


def evaluate(
    score_maps,
    gts,
    mode: str = "exact",
    bins: int = DEFAULT_BINS,
    method: str | None = None,
) -> EvalReport:
    """Pool per-image scores against evaluation states and report metrics.

    ``gts`` holds per-pixel states (1 obstacle, 0 not, 2 excluded);
    excluded pixels never touch the ranking. Streaming mode histograms
    the log-domain companion when a ScoreMap provides one, since the
    fixed binning then spreads over orders of magnitude of the linear
    score; plain arrays are binned as given.
    """
    if mode not in ("exact", "streaming"):
        raise ValidationError(f"mode {mode!r} not in exact/streaming")
    score_maps = list(score_maps)
    gts = [np.asarray(g) for g in gts]
    if len(score_maps) != len(gts):
        raise ShapeError(f"{len(score_maps)} score maps vs {len(gts)} ground truths")
    if not score_maps:
        raise DegenerateError("nothing to evaluate")

    prefer_log = mode == "streaming"
    flat_scores = []
    flat_pos = []
    n_obstacle = n_not = n_excluded = 0
    for entry, gt in zip(score_maps, gts):
        values = _score_values(entry, prefer_log)
        if gt.shape != values.shape:
            raise ShapeError(f"gt shape {gt.shape} != scores {values.shape}")
        bad = ~np.isin(gt, (GT_OBSTACLE, GT_NOT_OBSTACLE, GT_EXCLUDED))
        if bad.any():
            raise ValidationError("ground-truth states must be 0, 1 or 2")
        keep = gt != GT_EXCLUDED
        n_excluded += int((~keep).sum())
        pos = gt[keep] == GT_OBSTACLE
        n_obstacle += int(pos.sum())
        n_not += int(pos.size - pos.sum())
        flat_scores.append(np.asarray(values[keep], dtype=np.float64).reshape(-1))
        flat_pos.append(pos.reshape(-1))

    if n_obstacle == 0 or n_not == 0:
        raise DegenerateError(
            f"pooled set needs both classes ({n_obstacle} obstacle, {n_not} other)"
        )

    if method is None:
        method = score_maps[0].method if isinstance(score_maps[0], ScoreMap) else "scores"

    if mode == "exact":
        scores = np.concatenate(flat_scores)
        positives = np.concatenate(flat_pos)
        if not np.isfinite(scores).all():
            raise ValidationError("scores must be finite")
        tps, fps = _cumulative_counts(scores, positives)
        return EvalReport(
            method, "exact",
            _auroc_from_counts(tps, fps),
            _ap_from_counts(tps, fps),
            _fpr95_from_counts(tps, fps),
            n_obstacle, n_not, n_excluded,
        )

    lo = min(float(s.min()) for s in flat_scores if s.size)
    hi = max(float(s.max()) for s in flat_scores if s.size)
    hist = ScoreHistogram(lo, hi, bins)
    for s, y in zip(flat_scores, flat_pos):
        hist.add(s, y)
    return EvalReport(
        method, "streaming",
        hist.auroc(), hist.average_precision(), hist.fpr_at_95_tpr(),
        n_obstacle, n_not, n_excluded, bins=bins,
    )


def miou(pred_ids, gt_ids, k: int, ignore_id: int = 255) -> float:
    """Mean intersection-over-union over k classes, pooled over images.

    Accepts a single (H, W) pair or matching lists. Ground-truth pixels
    equal to ``ignore_id`` are dropped. Classes absent from both the
    prediction and the ground truth are skipped; if that leaves nothing,
    the mean is undefined and DegenerateError is raised.
    """
    if k < 1:
        raise ValidationError(f"k={k} must be positive")
    preds = [pred_ids] if isinstance(pred_ids, np.ndarray) else list(pred_ids)
    gts = [gt_ids] if isinstance(gt_ids, np.ndarray) else list(gt_ids)
    if len(preds) != len(gts):
        raise ShapeError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    conf = np.zeros(k * k, dtype=np.int64)
    for pred, gt in zip(preds, gts):
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
        valid = gt != ignore_id
        p = pred[valid].astype(np.int64)
        g = gt[valid].astype(np.int64)
        if p.size and (p.min() < 0 or p.max() >= k):
            raise ValidationError(f"prediction ids outside 0..{k - 1}")
        if g.size and (g.min() < 0 or g.max() >= k):
            raise ValidationError(f"ground-truth ids outside 0..{k - 1}")
        conf += np.bincount(g * k + p, minlength=k * k)
    conf = conf.reshape(k, k)
    tp = np.diag(conf)
    union = conf.sum(axis=0) + conf.sum(axis=1) - tp
    present = union > 0
    if not present.any():
        raise DegenerateError("no class present in prediction or ground truth")
    return float((tp[present] / union[present]).mean())
