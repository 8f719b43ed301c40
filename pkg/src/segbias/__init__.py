"""segbias: binary segmentation evaluation metrics and tools for measuring
and mitigating foreground/background data bias.

The package bundles:

* mask and probability-map types with bit-exact file formats,
* counting metrics (accuracy, precision, recall, IoU, F1, specificity) with
  explicit undefined-value and aggregation policies,
* boundary-based distance metrics (Hausdorff, average symmetric surface
  distance) on an exact Euclidean distance transform,
* a weighted cross-entropy loss over foreground, background and supplementary
  negative samples, with analytic gradients,
* dataset manifests with patient-level splits and a seeded 1:1
  negative-supplementation sampler,
* a deterministic synthetic dataset generator and a convex pixel classifier
  that make class-size, data-composition and class-weight effects observable
  at desk scale.
"""

from .counting import (
    AggregateResult,
    AggregationMode,
    AggregationPolicy,
    ConfusionCounts,
    CountingMetrics,
    aggregate,
    confusion_counts,
    counting_metrics,
)
from .distance import (
    BoundarySet,
    DistanceField,
    DistanceMetrics,
    EmptyPredPolicy,
    distance_metrics,
    exact_edt,
    extract_boundary,
)
from .errors import FormatError, SegbiasError, TrainingError, ValidationError
from .experiments import (
    DEFAULT_RATIO_GRID,
    CompositionResult,
    SizeEffectRow,
    SweepResult,
    SweepRow,
    composition_experiment,
    size_effect_experiment,
    spearman,
    weight_sweep,
)
from .loss import (
    LossBreakdown,
    LossGradient,
    LossWeights,
    loss_comb,
    loss_gradient,
    loss_neg,
    loss_pos,
    loss_suppl,
)
from .manifest import (
    Composition,
    DatasetManifest,
    ImageRecord,
    ManifestStats,
    Split,
    load_manifest,
    load_records,
    manifest_stats,
    save_manifest,
    save_records,
    split_filter,
    supplement,
)
from .masks import (
    EPSILON,
    BinaryMask,
    ProbMap,
    load_intensity,
    load_mask,
    load_probmap,
    save_intensity,
    save_mask,
    save_probmap,
)
from .report import ReportRow, TableFormat, emit_table, write_report
from .rng import SplitMix64
from .synth import SynthConfig, generate, size_ladder
from .trainer import (
    EvaluationResult,
    PixelModel,
    evaluate,
    load_model,
    pixel_features,
    predict,
    save_model,
    train,
)

__version__ = "0.1.0"
