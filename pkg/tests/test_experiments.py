import math

import numpy as np
import pytest
import scipy.stats

from segbias.errors import ValidationError
from segbias.experiments import (
    DEFAULT_RATIO_GRID,
    composition_experiment,
    size_effect_experiment,
    spearman,
    weight_sweep,
)
from segbias.loss import LossWeights
from segbias.manifest import Composition, DatasetManifest
from segbias.synth import SynthConfig, generate, size_ladder


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    config = SynthConfig(
        fg_fraction=0.08,
        seed=2,
        width=16,
        height=16,
        n_positive=(3, 0, 2),
        n_negative=(3, 0, 2),
        n_patients=(2, 1, 1),
    )
    return generate(config, tmp_path_factory.mktemp("tiny_ds"))


class TestSpearman:
    def test_perfect_monotone(self):
        assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
        assert spearman([1, 2, 3, 4], [8, 6, 4, 2]) == pytest.approx(-1.0)

    def test_hand_computed_example(self):
        # ranks x: [1,2,3,4,5]; ranks y: [2,1,4,3,5]; sum d^2 = 4
        # rho = 1 - 6*4 / (5*24) = 0.8
        assert spearman([1, 2, 3, 4, 5], [20, 10, 40, 30, 50]) == pytest.approx(0.8)

    def test_nonlinear_monotone_still_one(self):
        x = [1.0, 2.0, 3.0, 4.0, 5.0]
        y = [math.exp(v) for v in x]
        assert spearman(x, y) == pytest.approx(1.0)

    def test_matches_scipy_on_random_data(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(3, 30))
            x = rng.normal(size=n)
            y = rng.normal(size=n)
            expected = scipy.stats.spearmanr(x, y).statistic
            assert spearman(x, y) == pytest.approx(expected, abs=1e-12)

    def test_matches_scipy_with_ties(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(4, 25))
            x = rng.integers(0, 4, size=n).astype(float)
            y = rng.integers(0, 4, size=n).astype(float)
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            expected = scipy.stats.spearmanr(x, y).statistic
            assert spearman(x, y) == pytest.approx(expected, abs=1e-12)

    def test_constant_input_is_nan(self):
        assert math.isnan(spearman([1, 2, 3], [5, 5, 5]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            spearman([1, 2], [1, 2, 3])


class TestWeightSweep:
    def test_default_grid_covers_stated_range(self):
        assert DEFAULT_RATIO_GRID[0] == 0.7
        assert DEFAULT_RATIO_GRID[-1] == 15.0

    def test_rows_ordered_and_tagged(self, tiny):
        result = weight_sweep(tiny, ratios=[1.0, 3.0], epochs=20, lr=1.0, seed=0)
        assert result.ratios() == [1.0, 3.0]
        assert all(row.composition is Composition.SUPPLEMENTED for row in result.rows)

    def test_unsorted_ratios_rejected(self, tiny):
        with pytest.raises(ValidationError, match="strictly increasing"):
            weight_sweep(tiny, ratios=[3.0, 1.0], epochs=1, lr=0.5, seed=0)

    def test_out_of_range_needs_override(self, tiny):
        with pytest.raises(ValidationError, match="outside"):
            weight_sweep(tiny, ratios=[0.1, 1.0], epochs=1, lr=0.5, seed=0)
        result = weight_sweep(
            tiny, ratios=[0.1, 1.0], epochs=1, lr=0.5, seed=0, allow_out_of_range=True
        )
        assert result.ratios() == [0.1, 1.0]


class TestCompositionExperiment:
    def test_identical_manifests_zero_deltas(self, tiny):
        result = composition_experiment(
            tiny, tiny, LossWeights(1.0, 1.0), epochs=20, lr=1.0, seed=0
        )
        assert (
            result.organ_specific_model.weights.tolist()
            == result.supplemented_model.weights.tolist()
        )
        assert result.fp_organ_specific == result.fp_supplemented
        for name in ("accuracy", "precision", "recall", "iou", "f1", "specificity"):
            delta = result.metric_delta(name)
            assert delta is None or delta == 0.0

    def test_mismatched_test_split_rejected(self, tiny, tmp_path_factory):
        other = generate(
            SynthConfig(
                fg_fraction=0.08,
                seed=2,
                width=16,
                height=16,
                n_positive=(3, 0, 3),  # different TEST positives
                n_negative=(3, 0, 3),
                n_patients=(2, 1, 1),
            ),
            tmp_path_factory.mktemp("other_ds"),
        )
        with pytest.raises(ValidationError, match="TEST"):
            composition_experiment(other, tiny, LossWeights(1.0, 1.0), epochs=1, lr=0.5, seed=0)

    def test_positives_only_arm(self, tiny):
        organ_specific = DatasetManifest(
            organ=tiny.organ,
            records=tiny.positives(),
            composition=Composition.ORGAN_SPECIFIC,
            root=tiny.root,
        )
        result = composition_experiment(
            organ_specific, tiny, LossWeights(1.0, 1.0), epochs=20, lr=1.0, seed=0
        )
        # both arms were evaluated on the same supplemented test split
        assert len(result.organ_specific_eval.per_image) == len(
            result.supplemented_eval.per_image
        )


class TestSizeEffectExperiment:
    def test_single_rung(self, tiny, tmp_path_factory):
        ladder = size_ladder(
            SynthConfig(
                fg_fraction=0.05,
                seed=4,
                width=16,
                height=16,
                n_positive=(3, 0, 2),
                n_negative=(0, 0, 0),
                n_patients=(1, 1, 1),
            ),
            [0.08],
            tmp_path_factory.mktemp("ladder"),
        )
        rows = size_effect_experiment(ladder, LossWeights(1.0, 1.0), epochs=20, lr=1.0, seed=0)
        assert len(rows) == 1
        assert rows[0].fg_fraction == pytest.approx(0.08, rel=0.2)

    def test_empty_ladder_rejected(self):
        with pytest.raises(ValidationError):
            size_effect_experiment([], LossWeights(1.0, 1.0))
