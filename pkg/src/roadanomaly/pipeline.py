"""End-to-end benchmark glue: train, score held-out scenes, evaluate.

Also home to the throughput harness that times the scoring kernels and
the pooled metrics on synthetic inputs, reporting mean and standard
deviation over repeated runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .labels import make_eval_gt
from .metrics import EvalReport, evaluate
from .scoring import ScoreMap, max_logit, softmax_entropy, unknown_objectness_score, unknown_score
from .synth import SceneConfig, extract_features, generate_scene
from .tensor_io import LogitMap, ProbMap
from .toy import ToyModel, TrainConfig, TrainingCurve, predict, train_toy

# Held-out scenes start far above any plausible training index.
TEST_INDEX_BASE = 1_000_000


def score_with_method(
    method: str,
    probs=None,
    logits: LogitMap | None = None,
    k: int | None = None,
) -> ScoreMap:
    """Dispatch a scorer by name; see scoring.METHODS for the names.

    ``probs`` may be a ProbMap or, for "us" only, a raw class-probability
    array without an object channel.
    """
    if method == "us":
        if probs is None:
            raise ValidationError("us needs probabilities")
        return unknown_score(probs)
    if method == "uos":
        if probs is None:
            raise ValidationError("uos needs probabilities")
        return unknown_objectness_score(probs)
    if method == "entropy":
        if logits is None:
            raise ValidationError("entropy needs logits")
        return softmax_entropy(logits, k)
    if method == "maxlogit":
        if logits is None:
            raise ValidationError("maxlogit needs logits")
        return max_logit(logits, k)
    raise ValidationError(f"unknown method {method!r}")


@dataclass
class BenchmarkRun:
    """Reports per (setting, method), plus the trained models and curves."""

    reports: dict
    models: dict
    curves: dict


def run_benchmark(
    scene_cfg: SceneConfig,
    train_cfg: TrainConfig = TrainConfig(),
    n_test: int = 200,
    methods: tuple[str, ...] = ("us", "uos"),
    settings: tuple[bool, ...] = (False, True),
    test_index_base: int = TEST_INDEX_BASE,
) -> BenchmarkRun:
    """Train one model per use_ood setting and evaluate each method on
    the same held-out scenes.

    Keys of the returned dicts are ("ood" | "no_ood") and, for reports,
    (setting, method). Held-out scenes are disjoint from training
    indices and identical across settings.
    """
    if n_test < 1:
        raise ValidationError("need at least one test scene")
    test = []
    for i in range(n_test):
        image, _, obstacle, roi = generate_scene(scene_cfg, test_index_base + i)
        test.append((extract_features(image), make_eval_gt(obstacle, roi)))

    reports: dict = {}
    models: dict = {}
    curves: dict = {}
    for use_ood in settings:
        name = "ood" if use_ood else "no_ood"
        model, curve = train_toy(scene_cfg, replace(train_cfg, use_ood=use_ood))
        models[name] = model
        curves[name] = curve
        per_method: dict[str, list[ScoreMap]] = {m: [] for m in methods}
        gts = []
        for feats, gt in test:
            probs, logits = predict(model, feats)
            gts.append(gt)
            for m in methods:
                per_method[m].append(
                    score_with_method(m, probs=probs, logits=logits, k=model.k_predefined)
                )
        for m in methods:
            reports[(name, m)] = evaluate(per_method[m], gts, mode="exact", method=m)
    return BenchmarkRun(reports, models, curves)


@dataclass
class TimingResult:
    name: str
    reps: int
    mean_s: float
    std_s: float
    pixels: int

    @property
    def pixels_per_second(self) -> float:
        return self.pixels / self.mean_s if self.mean_s > 0 else float("inf")

    def format_line(self) -> str:
        return (
            f"{self.name}: {self.mean_s * 1e3:.2f} ms +/- {self.std_s * 1e3:.2f} ms "
            f"over {self.reps} reps, {self.pixels_per_second / 1e6:.1f} Mpx/s"
        )


def _time_op(name, op, reps, pixels, warmup=2) -> TimingResult:
    for _ in range(warmup):
        op()
    samples = np.empty(reps)
    for i in range(reps):
        t0 = time.perf_counter()
        op()
        samples[i] = time.perf_counter() - t0
    return TimingResult(name, reps, float(samples.mean()), float(samples.std()), pixels)


def bench_scoring(
    height: int = 2048,
    width: int = 1024,
    channels: int = 20,
    reps: int = 100,
    methods: tuple[str, ...] = ("us", "uos", "entropy", "maxlogit"),
    seed: int = 0,
) -> list[TimingResult]:
    """Time each scorer on one random (height, width, channels+1) map."""
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    rng = np.random.default_rng([seed, 3])
    probs = ProbMap(rng.random((height, width, channels + 1), dtype=np.float32))
    logits = LogitMap(
        rng.normal(0.0, 3.0, size=(height, width, channels + 1)).astype(np.float32)
    )
    pixels = height * width
    out = []
    for m in methods:
        out.append(
            _time_op(
                m,
                lambda m=m: score_with_method(m, probs=probs, logits=logits, k=channels),
                reps,
                pixels,
            )
        )
    return out


def bench_metrics(
    n_scores: int = 2 * 1024 * 1024,
    reps: int = 100,
    bins: int = 65536,
    seed: int = 0,
) -> list[TimingResult]:
    """Time exact and streaming pooled metrics on one random score set."""
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    rng = np.random.default_rng([seed, 4])
    scores = rng.random(n_scores)
    positives = rng.random(n_scores) < 0.05
    gt = positives.astype(np.uint8)  # no excluded pixels

    def exact():
        evaluate([scores], [gt], mode="exact", method="bench")

    def streaming():
        evaluate([scores], [gt], mode="streaming", bins=bins, method="bench")

    return [
        _time_op("metrics_exact", exact, reps, n_scores),
        _time_op("metrics_streaming", streaming, reps, n_scores),
    ]
