"""Command-line interface.

One subcommand per experiment procedure: synth, supplement, eval, loss,
train, sweep, composition, size-effect, report. All results go to files
(never stdout); errors are single lines on stderr. Exit codes: 0 success,
1 runtime failure, 2 usage error. Every stochastic subcommand requires an
explicit --seed, so reruns with identical flags reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .counting import AggregationMode, AggregationPolicy, aggregate, confusion_counts, counting_metrics, ConfusionCounts
from .distance import EmptyPredPolicy, distance_metrics
from .errors import SegbiasError, ValidationError
from .experiments import (
    DEFAULT_RATIO_GRID,
    composition_experiment,
    size_effect_experiment,
    weight_sweep,
)
from .loss import LossWeights, loss_comb
from .manifest import (
    Composition,
    DatasetManifest,
    Split,
    load_manifest,
    load_records,
    manifest_stats,
    save_manifest,
    supplement,
)
from .masks import BinaryMask, load_mask, load_probmap
from .report import ReportRow, TableFormat, emit_table, write_report
from .synth import SynthConfig, generate, size_ladder
from .trainer import EvaluationResult, save_model, train


def _parse_triple(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected three comma-separated integers (TRAIN,VAL,TEST), got {text!r}"
        )
    try:
        a, b, c = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-integer count in {text!r}") from None
    return a, b, c


def _parse_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")
    try:
        w, h = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-integer dimension in {text!r}") from None
    return w, h


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric value in {text!r}") from None


def _aggregation(name: str) -> AggregationPolicy:
    return AggregationPolicy(mode=AggregationMode(name))


def _empty_pred(name: str) -> EmptyPredPolicy:
    return EmptyPredPolicy(name)


def _table_format(name: str) -> TableFormat:
    return TableFormat(name)


def _add_eval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--threshold", type=float, default=0.5)
    parser.add_argument("--aggregation", choices=["macro", "micro"], default="macro")
    parser.add_argument(
        "--empty-pred-policy", choices=["exclude", "diagonal"], default="exclude"
    )


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=500)
    parser.add_argument("--lr", type=float, default=0.5)


def _add_synth_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--organ", default="blob")
    parser.add_argument("--image-size", type=_parse_size, default=(64, 64))
    parser.add_argument("--n-pos", type=_parse_triple, default=(30, 10, 15))
    parser.add_argument("--n-neg", type=_parse_triple, default=(30, 10, 15))
    parser.add_argument("--n-patients", type=_parse_triple, default=(3, 2, 2))
    parser.add_argument("--noise-sigma", type=float, default=0.15)
    parser.add_argument("--fg-level", type=float, default=0.6)
    parser.add_argument("--bg-level", type=float, default=0.4)


def _synth_config(args, fg_fraction: float, seed: int) -> SynthConfig:
    return SynthConfig(
        fg_fraction=fg_fraction,
        seed=seed,
        width=args.image_size[0],
        height=args.image_size[1],
        n_positive=args.n_pos,
        n_negative=args.n_neg,
        n_patients=args.n_patients,
        noise_sigma=args.noise_sigma,
        fg_level=args.fg_level,
        bg_level=args.bg_level,
        organ=args.organ,
    )


# ---------------------------------------------------------------------------
# Row builders
# ---------------------------------------------------------------------------


def _metric_row(
    label: str,
    result: EvaluationResult,
    size: float | None,
    with_distance: bool,
) -> ReportRow:
    metrics = result.counting.metrics
    excluded = dict(result.counting.excluded)
    hd = assd = None
    if with_distance:
        hd = result.distance.mean_hd
        assd = result.distance.mean_assd
        if result.distance.n_excluded:
            excluded["hd"] = result.distance.n_excluded
            excluded["assd"] = result.distance.n_excluded
    return ReportRow(
        label=label,
        size=size,
        accuracy=metrics.accuracy,
        precision=metrics.precision,
        recall=metrics.recall,
        iou=metrics.iou,
        f1=metrics.f1,
        specificity=metrics.specificity,
        hd=hd,
        assd=assd,
        excluded=excluded,
    )


def _per_image_rows(result: EvaluationResult, with_distance: bool) -> list[ReportRow]:
    rows = []
    for image in result.per_image:
        m = image.metrics
        hd = assd = None
        if with_distance and image.distance is not None:
            hd, assd = image.distance.hd, image.distance.assd
        rows.append(
            ReportRow(
                label=image.image_id,
                size=image.gt_fraction,
                accuracy=m.accuracy,
                precision=m.precision,
                recall=m.recall,
                iou=m.iou,
                f1=m.f1,
                specificity=m.specificity,
                hd=hd,
                assd=assd,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_synth(args) -> int:
    config = _synth_config(args, args.fg_fraction, args.seed)
    generate(config, args.out)
    return 0


def _cmd_supplement(args) -> int:
    manifest = load_manifest(args.manifest, organ=args.organ)
    pool = load_records(args.pool)
    result = supplement(manifest, pool, seed=args.seed)
    save_manifest(result, args.out)
    return 0


def _evaluate_with_predictions(args) -> tuple[DatasetManifest, EvaluationResult]:
    """Score every record of the manifest against probmaps in --pred-dir."""
    manifest = load_manifest(args.manifest, organ=args.organ)
    pred_dir = Path(args.pred_dir)
    policy = _aggregation(args.aggregation)
    empty_policy = _empty_pred(args.empty_pred_policy)
    per_image = []
    pooled = ConfusionCounts(0, 0, 0, 0)
    hd_values: list[float] = []
    assd_values: list[float] = []
    n_distance = 0
    n_excluded = 0
    from .trainer import DistanceSummary, EvaluationResult, ImageEvaluation

    for record in manifest.records:
        prob = load_probmap(pred_dir / f"{record.image_id}.f32")
        pred = BinaryMask.from_array(prob.data >= args.threshold)
        if record.weak_label(manifest.organ) == 1:
            if record.mask_path is None:
                raise ValidationError(
                    f"class-positive record {record.image_id!r} has no mask"
                )
            gt = load_mask(manifest.resolve(record.mask_path))
        else:
            gt = BinaryMask.from_array(
                np.zeros((prob.height, prob.width), dtype=bool)
            )
        counts = confusion_counts(pred, gt)
        pooled = pooled + counts
        dist = None
        if gt.foreground_count() > 0:
            n_distance += 1
            dist = distance_metrics(pred, gt, empty_policy)
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
    if not per_image:
        raise ValidationError("manifest holds no records to evaluate")
    counting = aggregate([e.metrics for e in per_image], policy, pooled)
    summary = DistanceSummary(
        mean_hd=sum(hd_values) / len(hd_values) if hd_values else None,
        mean_assd=sum(assd_values) / len(assd_values) if assd_values else None,
        n_images=n_distance,
        n_excluded=n_excluded,
    )
    return manifest, EvaluationResult(
        per_image=tuple(per_image),
        counting=counting,
        pooled=pooled,
        distance=summary,
        threshold=args.threshold,
    )


def _cmd_eval(args) -> int:
    manifest, result = _evaluate_with_predictions(args)
    with_distance = manifest.composition is Composition.ORGAN_SPECIFIC
    rows = _per_image_rows(result, with_distance)
    rows.append(
        _metric_row(f"aggregate_{args.aggregation}", result, None, with_distance)
    )
    write_report(rows, args.out, _table_format(args.format))
    return 0


def _cmd_loss(args) -> int:
    import csv

    manifest = load_manifest(args.manifest, organ=args.organ)
    pred_dir = Path(args.pred_dir)
    weights = LossWeights(w_pos=args.wpos, w_neg=args.wneg)
    rows = []
    totals = [0.0, 0.0, 0.0, 0.0]
    for record in manifest.records:
        prob = load_probmap(pred_dir / f"{record.image_id}.f32")
        if record.weak_label(manifest.organ) == 1:
            if record.mask_path is None:
                raise ValidationError(
                    f"class-positive record {record.image_id!r} has no mask"
                )
            gt = load_mask(manifest.resolve(record.mask_path))
            breakdown = loss_comb(prob, gt, [], weights)
        else:
            breakdown = loss_comb(None, None, [prob], weights)
        values = (breakdown.l_pos, breakdown.l_neg, breakdown.l_suppl, breakdown.l_comb)
        totals = [t + v for t, v in zip(totals, values)]
        rows.append([record.image_id] + [repr(v) for v in values])
    rows.append(["total"] + [repr(v) for v in totals])
    with open(args.out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["image_id", "l_pos", "l_neg", "l_suppl", "l_comb"])
        writer.writerows(rows)
    return 0


def _cmd_train(args) -> int:
    manifest = load_manifest(args.manifest, organ=args.organ)
    model = train(
        manifest,
        weights=LossWeights(w_pos=args.wpos, w_neg=args.wneg),
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
    )
    save_model(model, args.out)
    return 0


def _cmd_sweep(args) -> int:
    manifest = load_manifest(args.manifest, organ=args.organ)
    result = weight_sweep(
        manifest,
        ratios=args.ratios,
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        threshold=args.threshold,
        aggregation=_aggregation(args.aggregation),
        empty_pred_policy=_empty_pred(args.empty_pred_policy),
    )
    size = manifest_stats(manifest).organ_size
    with_distance = manifest.composition is Composition.ORGAN_SPECIFIC
    rows = [
        _metric_row(f"ratio_{row.ratio:g}", row.evaluation, size, with_distance)
        for row in result.rows
    ]
    write_report(rows, args.out, _table_format(args.format))
    return 0


def _cmd_composition(args) -> int:
    supplemented = load_manifest(args.manifest, organ=args.organ)
    if supplemented.composition is not Composition.SUPPLEMENTED:
        raise ValidationError(
            "composition experiment expects a supplemented manifest; the "
            "organ-specific arm is derived from its class-positive records"
        )
    organ_specific = DatasetManifest(
        organ=supplemented.organ,
        records=supplemented.positives(),
        composition=Composition.ORGAN_SPECIFIC,
        root=supplemented.root,
    )
    result = composition_experiment(
        organ_specific,
        supplemented,
        weights=LossWeights(w_pos=args.wpos, w_neg=args.wneg),
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        threshold=args.threshold,
        aggregation=_aggregation(args.aggregation),
        empty_pred_policy=_empty_pred(args.empty_pred_policy),
    )
    size = manifest_stats(supplemented).organ_size
    rows = [
        _metric_row("organ_specific_trained", result.organ_specific_eval, size, False),
        _metric_row("supplemented_trained", result.supplemented_eval, size, False),
    ]
    notes = [
        f"pooled test false positives: organ_specific_trained={result.fp_organ_specific}, "
        f"supplemented_trained={result.fp_supplemented}"
    ]
    write_report(rows, args.out, _table_format(args.format), notes=notes)
    return 0


def _cmd_size_effect(args) -> int:
    fractions = args.fractions
    config = _synth_config(args, fg_fraction=fractions[0], seed=args.seed)
    ladder = size_ladder(config, fractions, args.data_dir)
    rows_data = size_effect_experiment(
        ladder,
        weights=LossWeights(w_pos=args.wpos, w_neg=args.wneg),
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        threshold=args.threshold,
        aggregation=_aggregation(args.aggregation),
        empty_pred_policy=_empty_pred(args.empty_pred_policy),
    )
    with_distance = ladder[0].composition is Composition.ORGAN_SPECIFIC
    rows = [
        _metric_row(
            f"fg_{fraction:.4f}", row.evaluation, row.fg_fraction, with_distance
        )
        for fraction, row in zip(fractions, rows_data)
    ]
    write_report(rows, args.out, _table_format(args.format))
    return 0


def _cmd_report(args) -> int:
    manifest = load_manifest(args.manifest, organ=args.organ)
    stats = manifest_stats(manifest)
    rows = [ReportRow(label=stats.organ, size=stats.organ_size)]
    notes = [
        "records per split: "
        + ", ".join(f"{s.value}={stats.split_counts[s]}" for s in Split),
        f"class-positive={stats.positive_count}, class-negative={stats.negative_count}",
        f"composition={manifest.composition.value}",
    ]
    write_report(rows, args.out, _table_format(args.format), notes=notes)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segbias",
        description="Binary segmentation metrics and bias-mitigation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--fg-fraction", type=float, required=True)
    _add_synth_flags(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("supplement", help="add 1:1 class-negative records from a pool")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--organ", default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_supplement)

    p = sub.add_parser("eval", help="score precomputed probability maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--organ", default=None)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "md"], default="csv")
    _add_eval_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("loss", help="per-image loss breakdown for probability maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--organ", default=None)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--wpos", type=float, default=1.0)
    p.add_argument("--wneg", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("train", help="train the pixel classifier on the TRAIN split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--organ", default=None)
    p.add_argument("--wpos", type=float, default=1.0)
    p.add_argument("--wneg", type=float, default=1.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="train/evaluate across class-weight ratios")
    p.add_argument("--manifest", required=True)
    p.add_argument("--organ", default=None)
    p.add_argument(
        "--ratios", type=_parse_floats, default=list(DEFAULT_RATIO_GRID)
    )
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "md"], default="csv")
    _add_train_flags(p)
    _add_eval_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser(
        "composition",
        help="compare organ-specific vs supplemented training on one test split",
    )
    p.add_argument("--manifest", required=True)
    p.add_argument("--organ", default=None)
    p.add_argument("--wpos", type=float, default=1.0)
    p.add_argument("--wneg", type=float, default=1.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "md"], default="csv")
    _add_train_flags(p)
    _add_eval_flags(p)
    p.set_defaults(func=_cmd_composition)

    p = sub.add_parser(
        "size-effect", help="generate a size ladder and train/evaluate each rung"
    )
    p.add_argument("--out", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument(
        "--fractions", type=_parse_floats, default=[0.012, 0.032, 0.118, 0.262]
    )
    p.add_argument("--wpos", type=float, default=1.0)
    p.add_argument("--wneg", type=float, default=1.0)
    p.add_argument("--format", choices=["csv", "md"], default="csv")
    _add_synth_flags(p)
    _add_train_flags(p)
    _add_eval_flags(p)
    p.set_defaults(func=_cmd_size_effect)

    p = sub.add_parser("report", help="dataset statistics table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--organ", default=None)
    p.add_argument("--format", choices=["csv", "md"], default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SegbiasError, OSError, ValueError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
