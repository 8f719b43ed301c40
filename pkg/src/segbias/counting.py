"""Confusion counts and the six counting metrics, with explicit aggregation.

A metric whose denominator is zero is UNDEFINED, represented as ``None``.
Undefined values are never silently imputed: macro aggregation drops them and
reports how many per-image values were dropped for each metric.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import ValidationError
from .masks import BinaryMask

METRIC_NAMES = ("accuracy", "precision", "recall", "iou", "f1", "specificity")


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel tallies for one prediction/ground-truth pair."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )


@dataclass(frozen=True)
class CountingMetrics:
    """The six counting metrics; ``None`` marks an undefined value."""

    accuracy: float
    precision: float | None
    recall: float | None
    iou: float | None
    f1: float | None
    specificity: float | None

    def value(self, name: str) -> float | None:
        if name not in METRIC_NAMES:
            raise ValidationError(f"unknown metric {name!r}")
        return getattr(self, name)


class AggregationMode(Enum):
    MACRO = "macro"  # mean of per-image metrics, undefined values excluded
    MICRO = "micro"  # metrics of pooled pixel counts


@dataclass(frozen=True)
class AggregationPolicy:
    """How per-image metrics are combined over a test set.

    MACRO drops undefined per-image values and reports the dropped count per
    metric; MICRO recomputes each metric from the pooled counts and has no
    exclusion behaviour.
    """

    mode: AggregationMode = AggregationMode.MACRO


@dataclass(frozen=True)
class AggregateResult:
    metrics: CountingMetrics
    excluded: dict[str, int]  # per metric: images dropped as undefined (MACRO)
    n_images: int
    mode: AggregationMode


def confusion_counts(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    """Count TP/FP/TN/FN pixels for a prediction against its ground truth."""
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ValidationError(
            f"dimension mismatch: pred {pred.width}x{pred.height} "
            f"vs gt {gt.width}x{gt.height}"
        )
    p, g = pred.data, gt.data
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    tn = int((~p & ~g).sum())
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def counting_metrics(c: ConfusionCounts) -> CountingMetrics:
    """Evaluate accuracy, precision, recall, IoU, F1 and specificity.

        accuracy    = (tp + tn) / total
        precision   = tp / (tp + fp)
        recall      = tp / (tp + fn)
        specificity = tn / (tn + fp)
        iou         = tp / (tp + fp + fn)
        f1          = 2 tp / (2 tp + fp + fn)

    Zero denominators yield ``None``; accuracy always has total > 0.
    """
    if c.total == 0:
        raise ValidationError("confusion counts sum to zero pixels")
    return CountingMetrics(
        accuracy=(c.tp + c.tn) / c.total,
        precision=_ratio(c.tp, c.tp + c.fp),
        recall=_ratio(c.tp, c.tp + c.fn),
        iou=_ratio(c.tp, c.tp + c.fp + c.fn),
        f1=_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        specificity=_ratio(c.tn, c.tn + c.fp),
    )


def aggregate(
    per_image: Sequence[CountingMetrics],
    policy: AggregationPolicy,
    pooled: ConfusionCounts,
) -> AggregateResult:
    """Combine per-image metrics according to the aggregation policy."""
    if not per_image:
        raise ValidationError("cannot aggregate an empty metric list")
    n = len(per_image)
    if policy.mode is AggregationMode.MICRO:
        return AggregateResult(
            metrics=counting_metrics(pooled),
            excluded={name: 0 for name in METRIC_NAMES},
            n_images=n,
            mode=policy.mode,
        )
    values: dict[str, float | None] = {}
    excluded: dict[str, int] = {}
    for name in METRIC_NAMES:
        defined = [m.value(name) for m in per_image if m.value(name) is not None]
        excluded[name] = n - len(defined)
        values[name] = sum(defined) / len(defined) if defined else None
    if values["accuracy"] is None:
        raise ValidationError("accuracy undefined for every image")
    return AggregateResult(
        metrics=CountingMetrics(**values),  # type: ignore[arg-type]
        excluded=excluded,
        n_images=n,
        mode=policy.mode,
    )
