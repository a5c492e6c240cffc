"""Acceptance gate: one test per release criterion.

Each test is independent of the unit suites and re-derives its expected
values from scratch (pairwise comparisons, threshold rescans, central
differences) rather than trusting the library internals it checks.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import expit

from roadanomaly.labels import make_eval_gt
from roadanomaly.loss import LossConfig, boundary_loss_flat, boundary_loss_grad_flat
from roadanomaly.metrics import (
    ScoreHistogram,
    auroc,
    average_precision,
    fpr_at_95_tpr,
)
from roadanomaly.pipeline import TEST_INDEX_BASE, bench_scoring, run_benchmark
from roadanomaly.scoring import unknown_objectness_score, unknown_score
from roadanomaly.synth import SceneConfig, extract_features, generate_scene
from roadanomaly.tensor_io import ProbMap, read_tensor, write_tensor
from roadanomaly.toy import TrainConfig, predict

BENCH_SCENES = SceneConfig(seed=0)
BENCH_TRAIN = TrainConfig(seed=0)
N_TEST = 200


@pytest.fixture(scope="session")
def benchmark():
    """Train both supervision settings once and score 200 held-out scenes."""
    t0 = time.perf_counter()
    run = run_benchmark(BENCH_SCENES, BENCH_TRAIN, n_test=N_TEST)
    return run, time.perf_counter() - t0


# --- criterion 1: metric oracle equivalence ----------------------------


def pairwise_auroc(pos, neg):
    wins = ties = 0
    for i in range(0, pos.size, 512):
        block = pos[i : i + 512, None]
        wins += int((block > neg[None, :]).sum())
        ties += int((block == neg[None, :]).sum())
    return (2 * wins + ties) / (2 * pos.size * neg.size)


def enumerated_counts(scores, positives):
    """tp/fp per distinct threshold, counted by bisection on sorted copies."""
    thresholds = np.unique(scores)[::-1]
    pos_sorted = np.sort(scores[positives])
    neg_sorted = np.sort(scores[~positives])
    tps = pos_sorted.size - np.searchsorted(pos_sorted, thresholds, side="left")
    fps = neg_sorted.size - np.searchsorted(neg_sorted, thresholds, side="left")
    return tps, fps


def enumerated_ap(scores, positives):
    tps, fps = enumerated_counts(scores, positives)
    total_pos = int(tps[-1])
    terms = []
    prev = 0.0
    for tp, fp in zip(tps.tolist(), fps.tolist()):
        recall = tp / total_pos
        terms.append((recall - prev) * (tp / (tp + fp)))
        prev = recall
    return math.fsum(terms)


def enumerated_fpr95(scores, positives):
    tps, fps = enumerated_counts(scores, positives)
    total_pos = int(tps[-1])
    total_neg = int(fps[-1])
    for tp, fp in zip(tps.tolist(), fps.tolist()):
        if tp / total_pos >= 0.95:
            return fp / total_neg
    raise AssertionError("full recall is always reached")


def test_c1_ranking_metrics_match_oracles():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    for _ in range(1000):
        n = int(10 ** rng.uniform(1.0, 4.0))
        if rng.random() < 0.5:
            scores = rng.normal(size=n)
        else:
            m = int(rng.integers(1, 50))
            scores = rng.integers(0, m + 1, size=n) / m
        positives = rng.random(n) < rng.uniform(0.05, 0.95)
        positives[int(rng.integers(0, n))] = True
        positives[int(rng.integers(0, n))] = False
        if positives.all() or not positives.any():
            positives[0], positives[-1] = True, False

        got = auroc(scores, positives)
        want = pairwise_auroc(scores[positives], scores[~positives])
        assert abs(got - want) <= 1e-9
        assert average_precision(scores, positives) == enumerated_ap(scores, positives)
        assert fpr_at_95_tpr(scores, positives) == enumerated_fpr95(scores, positives)
    assert time.perf_counter() - start < 60.0


# --- criterion 2: dominance --------------------------------------------


def test_c2_objectness_never_exceeds_unknown_score(benchmark):
    rng = np.random.default_rng(202)
    checked = 0
    violations = 0
    while checked < 1_000_000:
        k = int(rng.integers(1, 13))
        values = rng.random((160, 160, k + 1), dtype=np.float32)
        saturate = rng.random((160, 160, k + 1)) < 0.05
        values[saturate] = rng.integers(0, 2, int(saturate.sum())).astype(np.float32)
        pm = ProbMap(values)
        us = unknown_score(pm)
        uos = unknown_objectness_score(pm)
        violations += int((uos.values > us.values).sum())
        violations += int((uos.log_values > us.log_values).sum())
        checked += 160 * 160
    assert checked >= 1_000_000
    assert violations == 0

    run, _ = benchmark
    for model in run.models.values():
        for i in range(N_TEST):
            image = generate_scene(BENCH_SCENES, TEST_INDEX_BASE + i)[0]
            probs, _ = predict(model, extract_features(image))
            us = unknown_score(probs)
            uos = unknown_objectness_score(probs)
            assert int((uos.values > us.values).sum()) == 0


# --- criterion 3: gradient vs finite differences -----------------------


def test_c3_gradient_matches_finite_differences():
    rng = np.random.default_rng(303)
    step = 1e-3
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(4, 13))
        c = int(rng.integers(2, 7))
        z = rng.uniform(-4.0, 4.0, (n, c))
        y = rng.integers(0, 2, (n, c)).astype(np.float64)
        delta = rng.integers(0, 2, n).astype(np.float64)
        counted = rng.random(n) < 0.85
        counted[int(rng.integers(0, n))] = True
        cfg = LossConfig(lam=float(rng.choice([0.0, 0.5, 3.0])))

        analytic = boundary_loss_grad_flat(z, y, delta, counted, cfg=cfg)
        for i in range(n):
            for j in range(c):
                zp = z.copy()
                zm = z.copy()
                zp[i, j] += step
                zm[i, j] -= step
                up = boundary_loss_flat(expit(zp), y, delta, counted, cfg=cfg).total
                down = boundary_loss_flat(expit(zm), y, delta, counted, cfg=cfg).total
                fd = (up - down) / (2 * step)
                a = analytic[i, j]
                rel = abs(a - fd) / max(abs(a), abs(fd), 1e-12)
                worst = max(worst, rel)
    assert worst < 1e-4


# --- criteria 4 and 5: directional replication -------------------------


def test_c4_objectness_improves_both_training_settings(benchmark):
    run, elapsed = benchmark
    assert elapsed < 300.0
    for setting in ("no_ood", "ood"):
        us = run.reports[(setting, "us")]
        uos = run.reports[(setting, "uos")]
        assert uos.fpr95 < us.fpr95
        assert uos.auroc > us.auroc


def test_c5_void_supervision_helps_average_precision(benchmark):
    run, _ = benchmark
    assert run.reports[("ood", "uos")].ap >= run.reports[("no_ood", "uos")].ap


# --- criterion 6: monotone-transform invariance -------------------------


def test_c6_metrics_invariant_under_monotone_transforms():
    rng = np.random.default_rng(606)
    transforms = (
        lambda s: np.log(np.maximum(s, 1e-7)),
        lambda s: s**3,
    )
    for _ in range(5):
        n = 100_000
        scores = rng.uniform(0.05, 1.0, n)
        block = int(rng.integers(100, 2000))
        scores[:block] = scores[block : 2 * block]  # guaranteed exact ties
        positives = rng.random(n) < 0.1
        positives[0], positives[-1] = True, False
        base = (
            auroc(scores, positives),
            average_precision(scores, positives),
            fpr_at_95_tpr(scores, positives),
        )
        for transform in transforms:
            mapped = transform(scores)
            assert auroc(mapped, positives) == base[0]
            assert average_precision(mapped, positives) == base[1]
            assert fpr_at_95_tpr(mapped, positives) == base[2]


# --- criterion 7: streaming fidelity ------------------------------------


def test_c7_streaming_metrics_track_exact():
    rng = np.random.default_rng(707)
    scores = np.concatenate(
        [rng.normal(1.5, 1.0, 50_000), rng.normal(0.0, 1.0, 950_000)]
    )
    positives = np.concatenate([np.ones(50_000, bool), np.zeros(950_000, bool)])
    hist = ScoreHistogram(float(scores.min()), float(scores.max()), bins=65536)
    hist.add(scores, positives)
    assert abs(hist.auroc() - auroc(scores, positives)) <= 0.002
    assert abs(hist.average_precision() - average_precision(scores, positives)) <= 0.002
    assert abs(hist.fpr_at_95_tpr() - fpr_at_95_tpr(scores, positives)) <= 0.002


# --- criterion 8: format round-trip --------------------------------------


def test_c8_tensor_round_trip(tmp_path):
    rng = np.random.default_rng(808)
    dtypes = (np.float32, np.uint8, np.uint32)
    path = tmp_path / "tensor.pxt"
    for _ in range(10_000):
        dtype = dtypes[int(rng.integers(0, 3))]
        ndim = int(rng.integers(1, 5))
        shape = tuple(int(rng.integers(1, 6)) for _ in range(ndim))
        raw = rng.integers(0, 256, size=(int(np.prod(shape)) * np.dtype(dtype).itemsize,))
        arr = raw.astype(np.uint8).view(dtype).reshape(shape)
        write_tensor(arr, path)
        back = read_tensor(path)
        assert back.dtype == np.dtype(dtype)
        assert back.shape == shape
        assert back.tobytes() == arr.tobytes()


# --- criterion 9: scoring throughput -------------------------------------


def test_c9_scoring_throughput():
    result = bench_scoring(
        height=2048, width=1024, channels=20, reps=100, methods=("uos",)
    )[0]
    print(result.format_line())
    assert result.reps == 100
    assert result.mean_s < 0.250


# --- shared-fixture sanity ------------------------------------------------


def test_benchmark_counts_consistent(benchmark):
    # every report pools the same held-out pixels
    run, _ = benchmark
    counts = {
        (r.n_obstacle, r.n_not_obstacle, r.n_excluded) for r in run.reports.values()
    }
    assert len(counts) == 1
    n_obstacle, n_not, n_excluded = counts.pop()
    assert n_obstacle > 0
    total = n_obstacle + n_not + n_excluded
    assert total == N_TEST * BENCH_SCENES.height * BENCH_SCENES.width

    # and the evaluation states really come from obstacle/roi pairs
    gt = make_eval_gt(*generate_scene(BENCH_SCENES, TEST_INDEX_BASE)[2:4])
    assert gt.shape == (BENCH_SCENES.height, BENCH_SCENES.width)
