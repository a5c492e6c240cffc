import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadanomaly.errors import ValidationError
from roadanomaly.scoring import (
    CLAMP_EPS,
    max_logit,
    softmax_entropy,
    unknown_objectness_score,
    unknown_score,
)
from roadanomaly.tensor_io import LogitMap, ProbMap


def prob_map(*pixel_rows):
    """Build a ProbMap from nested lists of per-pixel channel values."""
    return ProbMap(np.asarray(pixel_rows, dtype=np.float32))


def random_prob_map(seed, h=32, w=32, k=6, saturate=0.0):
    rng = np.random.default_rng(seed)
    values = rng.random((h, w, k + 1), dtype=np.float32)
    if saturate:
        hits = rng.random((h, w, k + 1)) < saturate
        values[hits] = rng.choice(
            np.array([0.0, 1.0], dtype=np.float32), size=int(hits.sum())
        )
    return ProbMap(values)


class TestUnknownScore:
    def test_two_half_probabilities(self):
        sm = unknown_score(prob_map([[0.5, 0.5, 0.9]]))
        # object channel ignored; (1-0.5)(1-0.5)
        np.testing.assert_allclose(sm.values[0, 0], 0.25, rtol=1e-6)
        np.testing.assert_allclose(sm.log_values[0, 0], np.log(0.25), rtol=1e-6)

    def test_all_confident_gives_near_zero(self):
        sm = unknown_score(prob_map([[1.0, 0.2, 0.5]]))
        # the saturated factor is clamped at eps instead of collapsing to 0
        np.testing.assert_allclose(sm.values[0, 0], CLAMP_EPS * 0.8, rtol=1e-5)

    def test_no_class_claims_pixel(self):
        sm = unknown_score(prob_map([[0.0, 0.0, 0.0]]))
        assert sm.values[0, 0] == pytest.approx(1.0)

    def test_values_are_exp_of_log(self):
        sm = unknown_score(random_prob_map(3))
        np.testing.assert_array_equal(sm.values, np.exp(sm.log_values))

    def test_accepts_raw_class_array(self):
        pm = random_prob_map(4)
        from_map = unknown_score(pm)
        from_raw = unknown_score(np.asarray(pm.predefined))
        np.testing.assert_array_equal(from_map.values, from_raw.values)

    def test_raw_array_validation(self):
        with pytest.raises(ValidationError):
            unknown_score(np.full((2, 2, 2), 1.5, dtype=np.float32))

    def test_method_label(self):
        assert unknown_score(random_prob_map(5)).method == "us"


class TestUnknownObjectness:
    def test_hand_value(self):
        sm = unknown_objectness_score(prob_map([[0.1, 0.2, 0.8]]))
        np.testing.assert_allclose(sm.values[0, 0], 0.8 * 0.9 * 0.8, rtol=1e-6)

    def test_zero_objectness_clamped(self):
        sm = unknown_objectness_score(prob_map([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(sm.values[0, 0], CLAMP_EPS, rtol=1e-5)

    def test_requires_object_channel(self):
        with pytest.raises(ValidationError):
            unknown_objectness_score(np.full((2, 2, 3), 0.5, dtype=np.float32))

    def test_never_exceeds_unknown_score(self):
        for seed in range(8):
            pm = random_prob_map(seed, saturate=0.1)
            us = unknown_score(pm)
            uos = unknown_objectness_score(pm)
            assert (uos.values <= us.values).all()
            assert (uos.log_values <= us.log_values).all()

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), k=st.integers(1, 12))
    def test_dominance_property(self, seed, k):
        pm = random_prob_map(seed, h=8, w=8, k=k, saturate=0.2)
        assert (unknown_objectness_score(pm).values <= unknown_score(pm).values).all()

    def test_full_object_confidence_matches_unknown_score(self):
        values = np.random.default_rng(9).random((4, 4, 5), dtype=np.float32)
        values[:, :, 4] = 1.0
        pm = ProbMap(values)
        np.testing.assert_array_equal(
            unknown_objectness_score(pm).values, unknown_score(pm).values
        )


class TestSoftmaxEntropy:
    def test_uniform_is_log_k(self):
        lm = LogitMap(np.zeros((1, 1, 4), dtype=np.float32))
        np.testing.assert_allclose(softmax_entropy(lm).values[0, 0], np.log(4), rtol=1e-6)

    def test_one_hot_is_near_zero(self):
        lm = LogitMap(np.array([[[40.0, -40.0, -40.0]]], dtype=np.float32))
        assert softmax_entropy(lm).values[0, 0] == pytest.approx(0.0, abs=1e-6)

    def test_two_logit_hand_value(self):
        lm = LogitMap(np.array([[[1.0, 0.0]]], dtype=np.float32))
        e = np.e
        expected = np.log(1 + e) - e / (1 + e)
        np.testing.assert_allclose(softmax_entropy(lm).values[0, 0], expected, rtol=1e-6)

    def test_shift_invariance(self):
        rng = np.random.default_rng(21)
        z = rng.normal(0, 4, size=(5, 5, 6)).astype(np.float32)
        a = softmax_entropy(LogitMap(z)).values
        b = softmax_entropy(LogitMap(z + 7.0)).values
        np.testing.assert_allclose(a, b, atol=1e-5)

    def test_k_limits_channels(self):
        z = np.array([[[0.0, 0.0, 99.0]]], dtype=np.float32)
        sm = softmax_entropy(LogitMap(z), k=2)
        np.testing.assert_allclose(sm.values[0, 0], np.log(2), rtol=1e-6)

    def test_no_log_companion(self):
        assert softmax_entropy(LogitMap(np.zeros((1, 1, 2), np.float32))).log_values is None

    def test_bad_k(self):
        lm = LogitMap(np.zeros((1, 1, 2), dtype=np.float32))
        with pytest.raises(ValidationError):
            softmax_entropy(lm, k=3)


class TestMaxLogit:
    def test_negated_max(self):
        lm = LogitMap(np.array([[[1.0, 3.0, -2.0]]], dtype=np.float32))
        assert max_logit(lm).values[0, 0] == -3.0

    def test_k_limits_channels(self):
        lm = LogitMap(np.array([[[1.0, 3.0, 99.0]]], dtype=np.float32))
        assert max_logit(lm, k=2).values[0, 0] == -3.0

    def test_confident_pixels_rank_lower(self):
        confident = np.array([[[12.0, -5.0]]], dtype=np.float32)
        uncertain = np.array([[[0.3, 0.2]]], dtype=np.float32)
        s_conf = max_logit(LogitMap(confident)).values[0, 0]
        s_unc = max_logit(LogitMap(uncertain)).values[0, 0]
        assert s_unc > s_conf


class TestOrientation:
    # every scorer must put anomalous (unclaimed) pixels above claimed ones
    def test_probability_scores(self):
        pm = prob_map([[0.99, 0.01, 0.9], [0.01, 0.02, 0.9]])
        for scorer in (unknown_score, unknown_objectness_score):
            sm = scorer(pm)
            assert sm.values[0, 1] > sm.values[0, 0]

    def test_logit_scores(self):
        lm = LogitMap(np.array([[[9.0, -9.0], [0.1, 0.0]]], dtype=np.float32))
        for scorer in (softmax_entropy, max_logit):
            sm = scorer(lm)
            assert sm.values[0, 1] > sm.values[0, 0]
