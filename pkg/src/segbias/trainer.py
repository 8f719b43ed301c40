"""Deterministic convex pixel classifier and test-set evaluation.

The model is logistic regression over six per-pixel features: a bias term,
normalized column and row coordinates, raw intensity, and the 3x3 mean and
standard deviation of intensity (edge-replicated at borders). Training is
full-batch gradient descent from zero-initialized weights over records sorted
by image_id: with a convex objective and no stochasticity, retraining
reproduces weights bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .counting import (
    AggregateResult,
    AggregationPolicy,
    ConfusionCounts,
    CountingMetrics,
    aggregate,
    confusion_counts,
    counting_metrics,
)
from .distance import DistanceMetrics, EmptyPredPolicy, distance_metrics
from .errors import FormatError, TrainingError, ValidationError
from .loss import LossWeights
from .manifest import DatasetManifest, Split, manifest_sha256, split_filter
from .masks import EPSILON, BinaryMask, ProbMap, load_intensity, load_mask

FEATURE_NAMES = ("bias", "x_norm", "y_norm", "intensity", "mean3", "std3")
FEATURE_SCHEMA = "pixel6-v1"
MODEL_SCHEMA_VERSION = 1

#: A gradient step that raises the loss by more than this triggers a
#: learning-rate halving; after _MAX_HALVINGS the run is declared divergent.
_DIVERGENCE_TOLERANCE = 1e-9
_MAX_HALVINGS = 20


@dataclass(frozen=True)
class TrainingMetadata:
    seed: int
    epochs: int
    lr: float
    lr_final: float
    w_pos: float
    w_neg: float
    manifest_sha256: str
    final_loss: float


@dataclass(frozen=True, eq=False)
class PixelModel:
    weights: np.ndarray  # shape (6,), float64
    metadata: TrainingMetadata

    def __post_init__(self) -> None:
        arr = np.asarray(self.weights, dtype=np.float64)
        if arr.shape != (len(FEATURE_NAMES),):
            raise ValidationError(
                f"model expects {len(FEATURE_NAMES)} weights, got shape {arr.shape}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "weights", arr)


def pixel_features(intensity: np.ndarray) -> np.ndarray:
    """Per-pixel feature matrix, shape (H*W, 6), row-major pixel order."""
    intensity = np.asarray(intensity, dtype=np.float64)
    if intensity.ndim != 2 or intensity.shape[0] < 3 or intensity.shape[1] < 3:
        raise ValidationError(
            f"feature extraction needs an image of at least 3x3, got {intensity.shape}"
        )
    h, w = intensity.shape
    x_norm = np.tile(np.arange(w) / w, h)
    y_norm = np.repeat(np.arange(h) / h, w)
    padded = np.pad(intensity, 1, mode="edge")
    stacked = np.stack(
        [padded[dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3)]
    )
    mean3 = stacked.mean(axis=0)
    var3 = np.maximum((stacked * stacked).mean(axis=0) - mean3 * mean3, 0.0)
    std3 = np.sqrt(var3)
    return np.column_stack(
        [
            np.ones(h * w),
            x_norm,
            y_norm,
            intensity.ravel(),
            mean3.ravel(),
            std3.ravel(),
        ]
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp may overflow for very negative z; 1/(1+inf) collapses to exactly 0,
    # which the caller's clamp lifts back to EPSILON.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def predict(model: PixelModel, intensity: np.ndarray) -> ProbMap:
    """Per-pixel foreground probability, clamped away from {0, 1}."""
    features = pixel_features(intensity)
    probs = _sigmoid(features @ model.weights)
    return ProbMap.from_array(probs.reshape(intensity.shape))


@dataclass(frozen=True, eq=False)
class _Batch:
    """All training pixels stacked into one design matrix.

    The stacked objective is algebraically identical to summing the combined
    loss over images (class-negative pixels behave like background pixels of
    a positive image); the test suite pins this equality against the loss
    module at double precision.
    """

    features: np.ndarray  # (total_pixels, 6)
    fg_index: np.ndarray  # indices of foreground pixels
    inv_n: np.ndarray  # (total_pixels,) 1 / pixel count of the owning image


def _load_batch(manifest: DatasetManifest, records) -> _Batch:
    feature_blocks = []
    target_blocks = []
    inv_n_blocks = []
    for record in records:
        intensity = load_intensity(manifest.resolve(f"images/{record.image_id}.f32"))
        n = intensity.size
        if record.weak_label(manifest.organ) == 1:
            if record.mask_path is None:
                raise ValidationError(
                    f"class-positive record {record.image_id!r} has no mask"
                )
            gt = load_mask(manifest.resolve(record.mask_path))
            if (gt.height, gt.width) != intensity.shape:
                raise ValidationError(
                    f"record {record.image_id!r}: mask {gt.width}x{gt.height} does "
                    f"not match image {intensity.shape[1]}x{intensity.shape[0]}"
                )
            targets = gt.data.ravel().copy()
        else:
            targets = np.zeros(n, dtype=bool)  # supplementary: all background
        feature_blocks.append(pixel_features(intensity))
        target_blocks.append(targets)
        inv_n_blocks.append(np.full(n, 1.0 / n))
    return _Batch(
        features=np.concatenate(feature_blocks),
        fg_index=np.flatnonzero(np.concatenate(target_blocks)),
        inv_n=np.concatenate(inv_n_blocks),
    )


def _objective(
    batch: _Batch, w_vec: np.ndarray, weights: LossWeights, with_grad: bool
) -> tuple[float, np.ndarray | None]:
    # Foreground pixels are a tiny minority; evaluating their terms through an
    # index array keeps both log passes to roughly one full-array traversal.
    probs = np.clip(_sigmoid(batch.features @ w_vec), EPSILON, 1.0 - EPSILON)
    fg = batch.fg_index
    p_fg = probs[fg]
    inv_n_fg = batch.inv_n[fg]
    log_neg = np.log1p(-probs)
    total_neg = float(np.dot(batch.inv_n, log_neg)) - float(np.dot(inv_n_fg, log_neg[fg]))
    total_pos = float(np.dot(inv_n_fg, np.log(p_fg)))
    total = -weights.w_pos * total_pos - weights.w_neg * total_neg
    if not with_grad:
        return total, None
    dl_dz = (weights.w_neg * batch.inv_n) * probs
    dl_dz[fg] = -weights.w_pos * inv_n_fg * (1.0 - p_fg)
    return total, batch.features.T @ dl_dz


def batch_loss(
    manifest: DatasetManifest,
    weight_vector: np.ndarray,
    weights: LossWeights = LossWeights(),
    split: Split = Split.TRAIN,
) -> float:
    """Combined loss of a candidate weight vector over one manifest split."""
    subset = split_filter(manifest, split)
    if not subset.records:
        raise ValidationError(f"manifest has no {split.value} records")
    records = sorted(subset.records, key=lambda r: r.image_id)
    batch = _load_batch(manifest, records)
    value, _ = _objective(batch, np.asarray(weight_vector, dtype=np.float64), weights, False)
    return value


def train(
    manifest: DatasetManifest,
    weights: LossWeights = LossWeights(),
    epochs: int = 500,
    lr: float = 0.5,
    seed: int = 0,
) -> PixelModel:
    """Full-batch gradient descent on the combined loss over the TRAIN split.

    Class-positive images contribute foreground + background loss against
    their masks; class-negative images contribute supplementary background
    loss. The epoch loss is enforced to be non-increasing: a step that raises
    it beyond 1e-9 is retried at half the step size (backtracking restarts
    from the base learning rate each epoch), and a step that still increases
    the loss after 20 halvings aborts the run.
    """
    if epochs < 1:
        raise ValidationError(f"epochs must be >= 1, got {epochs}")
    if not (lr > 0.0):
        raise ValidationError(f"learning rate must be > 0, got {lr}")
    train_split = split_filter(manifest, Split.TRAIN)
    if not train_split.records:
        raise ValidationError("manifest has no TRAIN records")
    records = sorted(train_split.records, key=lambda r: r.image_id)
    batch = _load_batch(manifest, records)

    w_vec = np.zeros(len(FEATURE_NAMES))
    step_lr = lr
    loss_now, grad = _objective(batch, w_vec, weights, with_grad=True)
    for _ in range(epochs):
        # Backtracking with adaptive restart: re-grow towards the base rate so
        # one persistent overshoot region cannot freeze the step size.
        step_lr = min(lr, step_lr * 2.0)
        halvings = 0
        while True:
            w_try = w_vec - step_lr * grad
            loss_try, grad_try = _objective(batch, w_try, weights, with_grad=True)
            if loss_try <= loss_now + _DIVERGENCE_TOLERANCE:
                break
            halvings += 1
            if halvings > _MAX_HALVINGS:
                raise TrainingError(
                    f"training diverged: a step still increases the loss after "
                    f"{_MAX_HALVINGS} learning-rate halvings"
                )
            step_lr /= 2.0
        w_vec = w_try
        loss_now = loss_try
        grad = grad_try
    metadata = TrainingMetadata(
        seed=seed,
        epochs=epochs,
        lr=lr,
        lr_final=step_lr,
        w_pos=weights.w_pos,
        w_neg=weights.w_neg,
        manifest_sha256=manifest_sha256(manifest),
        final_loss=loss_now,
    )
    return PixelModel(weights=w_vec, metadata=metadata)


# ---------------------------------------------------------------------------
# Model persistence
# ---------------------------------------------------------------------------


def save_model(model: PixelModel, path) -> None:
    payload = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "feature_schema": FEATURE_SCHEMA,
        "weights": [float(v) for v in model.weights],
        "metadata": {
            "seed": model.metadata.seed,
            "epochs": model.metadata.epochs,
            "lr": model.metadata.lr,
            "lr_final": model.metadata.lr_final,
            "w_pos": model.metadata.w_pos,
            "w_neg": model.metadata.w_neg,
            "manifest_sha256": model.metadata.manifest_sha256,
            "final_loss": model.metadata.final_loss,
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_model(path) -> PixelModel:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid model JSON: {exc}") from exc
    if payload.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise FormatError(
            f"{path}: unsupported model schema_version {payload.get('schema_version')!r}, "
            f"expected {MODEL_SCHEMA_VERSION}"
        )
    if payload.get("feature_schema") != FEATURE_SCHEMA:
        raise FormatError(
            f"{path}: feature schema {payload.get('feature_schema')!r} does not match "
            f"{FEATURE_SCHEMA!r}"
        )
    meta = payload["metadata"]
    return PixelModel(
        weights=np.asarray(payload["weights"], dtype=np.float64),
        metadata=TrainingMetadata(
            seed=meta["seed"],
            epochs=meta["epochs"],
            lr=meta["lr"],
            lr_final=meta["lr_final"],
            w_pos=meta["w_pos"],
            w_neg=meta["w_neg"],
            manifest_sha256=meta["manifest_sha256"],
            final_loss=meta["final_loss"],
        ),
    )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImageEvaluation:
    image_id: str
    gt_fraction: float  # foreground fraction of the ground truth
    counts: ConfusionCounts
    metrics: CountingMetrics
    distance: DistanceMetrics | None  # None when the ground truth is empty


@dataclass(frozen=True)
class DistanceSummary:
    mean_hd: float | None
    mean_assd: float | None
    n_images: int  # images with a non-empty ground truth
    n_excluded: int  # of those, images dropped by the empty-prediction policy


@dataclass(frozen=True)
class EvaluationResult:
    per_image: tuple[ImageEvaluation, ...]
    counting: AggregateResult
    pooled: ConfusionCounts
    distance: DistanceSummary
    threshold: float


def evaluate(
    model: PixelModel,
    manifest: DatasetManifest,
    threshold: float = 0.5,
    aggregation: AggregationPolicy = AggregationPolicy(),
    empty_pred_policy: EmptyPredPolicy = EmptyPredPolicy.EXCLUDE,
) -> EvaluationResult:
    """Predict, binarize at ``threshold`` and score the TEST split.

    Counting metrics are computed per image and aggregated per policy (a
    class-negative image is scored against an all-background ground truth).
    Distance metrics are computed only for images whose ground truth has
    foreground, and summarized separately.
    """
    test_split = split_filter(manifest, Split.TEST)
    if not test_split.records:
        raise ValidationError("manifest has no TEST records")
    per_image = []
    pooled = ConfusionCounts(0, 0, 0, 0)
    hd_values: list[float] = []
    assd_values: list[float] = []
    n_distance = 0
    n_excluded = 0
    for record in test_split.records:
        intensity = load_intensity(manifest.resolve(f"images/{record.image_id}.f32"))
        prob = predict(model, intensity)
        pred = BinaryMask.from_array(prob.data >= threshold)
        if record.weak_label(manifest.organ) == 1:
            if record.mask_path is None:
                raise ValidationError(
                    f"class-positive record {record.image_id!r} has no mask"
                )
            gt = load_mask(manifest.resolve(record.mask_path))
        else:
            gt = BinaryMask.from_array(np.zeros(intensity.shape, dtype=bool))
        counts = confusion_counts(pred, gt)
        pooled = pooled + counts
        dist = None
        if gt.foreground_count() > 0:
            n_distance += 1
            dist = distance_metrics(pred, gt, empty_pred_policy)
            if dist.hd is None:
                n_excluded += 1
            else:
                hd_values.append(dist.hd)
                assd_values.append(dist.assd)
        per_image.append(
            ImageEvaluation(
                image_id=record.image_id,
                gt_fraction=gt.foreground_count() / (gt.width * gt.height),
                counts=counts,
                metrics=counting_metrics(counts),
                distance=dist,
            )
        )
    counting = aggregate([e.metrics for e in per_image], aggregation, pooled)
    distance = DistanceSummary(
        mean_hd=sum(hd_values) / len(hd_values) if hd_values else None,
        mean_assd=sum(assd_values) / len(assd_values) if assd_values else None,
        n_images=n_distance,
        n_excluded=n_excluded,
    )
    return EvaluationResult(
        per_image=tuple(per_image),
        counting=counting,
        pooled=pooled,
        distance=distance,
        threshold=threshold,
    )
