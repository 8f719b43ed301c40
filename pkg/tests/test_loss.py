import math

import numpy as np
import pytest

from segbias.errors import ValidationError
from segbias.loss import (
    LossWeights,
    loss_comb,
    loss_gradient,
    loss_neg,
    loss_pos,
    loss_suppl,
)
from segbias.masks import EPSILON, BinaryMask, ProbMap

LN2 = math.log(2.0)


def prob(values) -> ProbMap:
    arr = np.atleast_2d(np.asarray(values, dtype=np.float64))
    return ProbMap.from_array(arr)


def mask(values) -> BinaryMask:
    arr = np.atleast_2d(np.asarray(values, dtype=bool))
    return BinaryMask.from_array(arr)


def reference_mean_bce(p: np.ndarray, y: np.ndarray) -> float:
    """Independent oracle: plain mean binary cross-entropy."""
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


class TestLossTerms:
    def test_loss_pos_single_pixel(self):
        assert loss_pos(prob([0.5]), mask([1]), 1.0) == pytest.approx(LN2)

    def test_loss_pos_scales_with_weight(self):
        assert loss_pos(prob([0.5]), mask([1]), 2.0) == pytest.approx(2 * LN2)

    def test_loss_pos_vanishes_without_foreground(self):
        assert loss_pos(prob([0.9, 0.1]), mask([0, 0]), 5.0) == 0.0

    def test_loss_neg_single_pixel(self):
        assert loss_neg(prob([0.5]), mask([0]), 1.0) == pytest.approx(LN2)

    def test_loss_neg_vanishes_without_background(self):
        assert loss_neg(prob([0.2, 0.8]), mask([1, 1]), 3.0) == 0.0

    def test_loss_neg_mean_over_pixels(self):
        assert loss_neg(prob([0.5, 0.5]), mask([0, 0]), 1.0) == pytest.approx(LN2)

    def test_loss_suppl_single_sample(self):
        assert loss_suppl([prob([0.5, 0.5])], 1.0) == pytest.approx(LN2)

    def test_loss_suppl_perfect_prediction_limit(self):
        value = loss_suppl([prob([EPSILON, EPSILON])], 1.0)
        assert 0.0 <= value < 1e-6

    def test_loss_suppl_empty_list(self):
        assert loss_suppl([], 1.0) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            loss_pos(prob([0.5, 0.5]), mask([1]), 1.0)


class TestLossComb:
    def test_reduces_to_mean_bce_with_unit_weights(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            h, w = (int(v) for v in rng.integers(1, 12, size=2))
            p = rng.uniform(0.05, 0.95, size=(h, w))
            y = rng.random((h, w)) < 0.5
            breakdown = loss_comb(prob(p), mask(y), [], LossWeights(1.0, 1.0))
            assert abs(breakdown.l_comb - reference_mean_bce(p, y)) <= 1e-12

    def test_single_pixel_weighted(self):
        breakdown = loss_comb(prob([0.5]), mask([1]), [], LossWeights(2.0, 1.0))
        assert breakdown.l_comb == pytest.approx(2 * LN2)
        assert breakdown.l_pos == pytest.approx(2 * LN2)
        assert breakdown.l_neg == 0.0
        assert breakdown.l_suppl == 0.0

    def test_terms_sum_to_combined(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            p = rng.uniform(0.05, 0.95, size=(4, 5))
            y = rng.random((4, 5)) < 0.4
            z = rng.uniform(0.05, 0.95, size=(4, 5))
            weights = LossWeights(w_pos=rng.uniform(0.5, 4), w_neg=rng.uniform(0.5, 4))
            b = loss_comb(prob(p), mask(y), [prob(z)], weights)
            assert abs(b.l_comb - (b.l_pos + b.l_neg + b.l_suppl)) <= 1e-12
            assert b.l_pos >= 0 and b.l_neg >= 0 and b.l_suppl >= 0

    def test_doubling_weights_doubles_loss(self):
        rng = np.random.default_rng(2)
        p = rng.uniform(0.1, 0.9, size=(6, 6))
        y = rng.random((6, 6)) < 0.3
        z = rng.uniform(0.1, 0.9, size=(6, 6))
        one = loss_comb(prob(p), mask(y), [prob(z)], LossWeights(1.3, 0.8))
        two = loss_comb(prob(p), mask(y), [prob(z)], LossWeights(2.6, 1.6))
        assert abs(two.l_comb - 2 * one.l_comb) <= 1e-12

    def test_suppl_only_batch(self):
        b = loss_comb(None, None, [prob([0.5])], LossWeights(1.0, 1.0))
        assert b.l_pos == 0.0 and b.l_neg == 0.0
        assert b.l_comb == pytest.approx(LN2)

    def test_prob_without_gt_rejected(self):
        with pytest.raises(ValidationError):
            loss_comb(prob([0.5]), None, [], LossWeights())

    def test_monotone_in_probabilities(self):
        # raising p at a foreground pixel lowers the loss; at a background or
        # supplementary pixel it raises the loss
        base = np.full((1, 3), 0.5)
        y = mask([1, 0, 0])
        weights = LossWeights(1.0, 1.0)
        l0 = loss_comb(prob(base), y, [], weights).l_comb
        up_fg = base.copy()
        up_fg[0, 0] = 0.7
        assert loss_comb(prob(up_fg), y, [], weights).l_comb < l0
        up_bg = base.copy()
        up_bg[0, 1] = 0.7
        assert loss_comb(prob(up_bg), y, [], weights).l_comb > l0
        s0 = loss_suppl([prob(base)], 1.0)
        assert loss_suppl([prob(up_bg)], 1.0) > s0


class TestLossGradient:
    def test_foreground_pixel_value(self):
        g = loss_gradient(prob([0.5]), mask([1]), [], LossWeights(2.0, 1.0))
        assert g.positive[0, 0] == pytest.approx(-4.0)

    def test_background_pixel_value(self):
        g = loss_gradient(prob([0.5]), mask([0]), [], LossWeights(1.0, 1.0))
        assert g.positive[0, 0] == pytest.approx(2.0)

    def test_sign_pattern(self):
        rng = np.random.default_rng(3)
        p = rng.uniform(0.05, 0.95, size=(5, 5))
        y = rng.random((5, 5)) < 0.5
        z = rng.uniform(0.05, 0.95, size=(5, 5))
        g = loss_gradient(prob(p), mask(y), [prob(z)], LossWeights(1.5, 0.7))
        assert (g.positive[y] < 0).all()
        assert (g.positive[~y] > 0).all()
        assert (g.supplementary[0] > 0).all()

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_central_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        h, w = 8, 9
        p = rng.uniform(0.1, 0.9, size=(h, w))
        y = rng.random((h, w)) < 0.3
        z = rng.uniform(0.1, 0.9, size=(h, w))
        weights = LossWeights(w_pos=1.7, w_neg=0.9)
        grad = loss_gradient(prob(p), mask(y), [prob(z)], weights)
        step = 1e-6

        def combined(pp, zz):
            return loss_comb(prob(pp), mask(y), [prob(zz)], weights).l_comb

        for index in rng.choice(h * w, size=12, replace=False):
            r, c = divmod(int(index), w)
            plus, minus = p.copy(), p.copy()
            plus[r, c] += step
            minus[r, c] -= step
            fd = (combined(plus, z) - combined(minus, z)) / (2 * step)
            assert abs(fd - grad.positive[r, c]) <= 1e-6 * max(1.0, abs(fd))

            plus, minus = z.copy(), z.copy()
            plus[r, c] += step
            minus[r, c] -= step
            fd = (combined(p, plus) - combined(p, minus)) / (2 * step)
            assert abs(fd - grad.supplementary[0][r, c]) <= 1e-6 * max(1.0, abs(fd))
