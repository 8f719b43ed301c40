"""Experiment harnesses: class-weight sweeps, training-composition pairing,
and the object-size ladder. Every experiment is a pure function of its
manifest(s), hyperparameters and seed."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .counting import AggregationPolicy
from .distance import EmptyPredPolicy
from .errors import ValidationError
from .loss import LossWeights
from .manifest import Composition, DatasetManifest, Split, manifest_stats
from .trainer import EvaluationResult, PixelModel, evaluate, train

DEFAULT_RATIO_GRID = (0.7, 1.0, 2.0, 3.0, 5.0, 10.0, 15.0)
_RATIO_RANGE = (0.7, 15.0)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties.

    Returns NaN when either input has no rank variation.
    """
    if len(x) != len(y):
        raise ValidationError("spearman needs sequences of equal length")
    if len(x) < 2:
        raise ValidationError("spearman needs at least two observations")
    rx = _average_ranks(np.asarray(x, dtype=np.float64))
    ry = _average_ranks(np.asarray(y, dtype=np.float64))
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        return math.nan
    return float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass(frozen=True)
class SweepRow:
    ratio: float  # w_pos / w_neg, with w_neg pinned at 1
    evaluation: EvaluationResult
    composition: Composition


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]

    def metric_series(self, name: str) -> list[float | None]:
        return [row.evaluation.counting.metrics.value(name) for row in self.rows]

    def ratios(self) -> list[float]:
        return [row.ratio for row in self.rows]


def weight_sweep(
    manifest: DatasetManifest,
    ratios: Sequence[float] = DEFAULT_RATIO_GRID,
    epochs: int = 500,
    lr: float = 0.5,
    seed: int = 0,
    threshold: float = 0.5,
    aggregation: AggregationPolicy = AggregationPolicy(),
    empty_pred_policy: EmptyPredPolicy = EmptyPredPolicy.EXCLUDE,
    allow_out_of_range: bool = False,
) -> SweepResult:
    """Train and evaluate once per foreground/background weight ratio.

    The ratio is carried entirely by w_pos (w_neg = 1). Ratios must be
    strictly increasing and, unless ``allow_out_of_range`` is set, stay
    within [0.7, 15].
    """
    ratios = [float(r) for r in ratios]
    if not ratios or any(b <= a for a, b in zip(ratios, ratios[1:])):
        raise ValidationError("ratios must be non-empty and strictly increasing")
    if not allow_out_of_range:
        lo, hi = _RATIO_RANGE
        bad = [r for r in ratios if not (lo <= r <= hi)]
        if bad:
            raise ValidationError(
                f"ratio(s) {bad} outside [{lo}, {hi}]; pass allow_out_of_range=True "
                f"to override"
            )
    rows = []
    for ratio in ratios:
        model = train(
            manifest,
            weights=LossWeights(w_pos=ratio, w_neg=1.0),
            epochs=epochs,
            lr=lr,
            seed=seed,
        )
        result = evaluate(
            model,
            manifest,
            threshold=threshold,
            aggregation=aggregation,
            empty_pred_policy=empty_pred_policy,
        )
        rows.append(SweepRow(ratio=ratio, evaluation=result, composition=manifest.composition))
    return SweepResult(rows=tuple(rows))


@dataclass(frozen=True)
class CompositionResult:
    organ_specific_model: PixelModel
    supplemented_model: PixelModel
    organ_specific_eval: EvaluationResult  # both arms scored on the supplemented TEST split
    supplemented_eval: EvaluationResult
    fp_organ_specific: int
    fp_supplemented: int

    def metric_delta(self, name: str) -> float | None:
        """Supplemented-trained minus organ-specific-trained aggregate value."""
        a = self.supplemented_eval.counting.metrics.value(name)
        b = self.organ_specific_eval.counting.metrics.value(name)
        if a is None or b is None:
            return None
        return a - b


def composition_experiment(
    organ_specific: DatasetManifest,
    supplemented: DatasetManifest,
    weights: LossWeights = LossWeights(),
    epochs: int = 500,
    lr: float = 0.5,
    seed: int = 0,
    threshold: float = 0.5,
    aggregation: AggregationPolicy = AggregationPolicy(),
    empty_pred_policy: EmptyPredPolicy = EmptyPredPolicy.EXCLUDE,
) -> CompositionResult:
    """Train one model per training-data composition; score both on the
    second manifest's TEST split and report pooled false-positive counts.

    The arms must agree on the class-positive TEST images; compositions are
    not enforced, so passing the same manifest twice yields identical models
    and zero deltas.
    """
    ids_a = {
        r.image_id
        for r in organ_specific.records
        if r.split is Split.TEST and r.weak_label(organ_specific.organ) == 1
    }
    ids_b = {
        r.image_id
        for r in supplemented.records
        if r.split is Split.TEST and r.weak_label(supplemented.organ) == 1
    }
    if ids_a != ids_b:
        raise ValidationError(
            "manifests disagree on the class-positive TEST images; the two arms "
            "must share one test split definition"
        )
    model_a = train(organ_specific, weights=weights, epochs=epochs, lr=lr, seed=seed)
    model_b = train(supplemented, weights=weights, epochs=epochs, lr=lr, seed=seed)
    eval_a = evaluate(
        model_a,
        supplemented,
        threshold=threshold,
        aggregation=aggregation,
        empty_pred_policy=empty_pred_policy,
    )
    eval_b = evaluate(
        model_b,
        supplemented,
        threshold=threshold,
        aggregation=aggregation,
        empty_pred_policy=empty_pred_policy,
    )
    return CompositionResult(
        organ_specific_model=model_a,
        supplemented_model=model_b,
        organ_specific_eval=eval_a,
        supplemented_eval=eval_b,
        fp_organ_specific=eval_a.pooled.fp,
        fp_supplemented=eval_b.pooled.fp,
    )


@dataclass(frozen=True)
class SizeEffectRow:
    fg_fraction: float  # measured mean foreground fraction of the rung
    evaluation: EvaluationResult


def size_effect_experiment(
    ladder: Sequence[DatasetManifest],
    weights: LossWeights = LossWeights(),
    epochs: int = 500,
    lr: float = 0.5,
    seed: int = 0,
    threshold: float = 0.5,
    aggregation: AggregationPolicy = AggregationPolicy(),
    empty_pred_policy: EmptyPredPolicy = EmptyPredPolicy.EXCLUDE,
) -> list[SizeEffectRow]:
    """Train and evaluate each ladder rung with identical hyperparameters."""
    if not ladder:
        raise ValidationError("size-effect experiment needs at least one manifest")
    rows = []
    for manifest in ladder:
        stats = manifest_stats(manifest)
        model = train(manifest, weights=weights, epochs=epochs, lr=lr, seed=seed)
        result = evaluate(
            model,
            manifest,
            threshold=threshold,
            aggregation=aggregation,
            empty_pred_policy=empty_pred_policy,
        )
        rows.append(SizeEffectRow(fg_fraction=stats.organ_size, evaluation=result))
    return rows
