"""Dataset manifests: records with weak labels, patient-level splits, the
negative-supplementation sampler, and dataset statistics.

A manifest file is JSON-lines, UTF-8, one record object per line with exactly
the fields ``image_id``, ``patient_id``, ``split``, ``mask_path`` and
``weak_labels``. ``mask_path`` is null for records outside the organ subset
and is interpreted relative to the manifest's directory when not absolute.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import FormatError, ValidationError
from .masks import BinaryMask, load_mask
from .rng import SplitMix64

RECORD_FIELDS = ("image_id", "patient_id", "split", "mask_path", "weak_labels")


class Split(Enum):
    TRAIN = "TRAIN"
    VAL = "VAL"
    TEST = "TEST"


class Composition(Enum):
    ORGAN_SPECIFIC = "organ_specific"  # class-positive images only, all with masks
    SUPPLEMENTED = "supplemented"  # 1:1 class-positive : class-negative per split


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    patient_id: str
    split: Split
    mask_path: str | None
    weak_labels: dict[str, int]

    def weak_label(self, organ: str) -> int:
        try:
            value = self.weak_labels[organ]
        except KeyError:
            raise ValidationError(
                f"record {self.image_id!r} has no weak label for organ {organ!r}"
            ) from None
        if value not in (0, 1):
            raise ValidationError(
                f"record {self.image_id!r}: weak label for {organ!r} must be 0 or 1"
            )
        return value


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered, validated collection of image records for one organ."""

    organ: str
    records: tuple[ImageRecord, ...]
    composition: Composition
    root: Path | None = field(default=None, compare=False)  # base for relative paths

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        _validate_manifest(self.organ, self.records, self.composition)

    def positives(self) -> tuple[ImageRecord, ...]:
        return tuple(r for r in self.records if r.weak_label(self.organ) == 1)

    def negatives(self) -> tuple[ImageRecord, ...]:
        return tuple(r for r in self.records if r.weak_label(self.organ) == 0)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p


@dataclass(frozen=True)
class ManifestStats:
    organ: str
    organ_size: float  # mean foreground fraction over class-positive records
    split_counts: dict[Split, int]
    positive_count: int
    negative_count: int


def _validate_manifest(
    organ: str, records: Sequence[ImageRecord], composition: Composition
) -> None:
    seen: set[str] = set()
    for record in records:
        if record.image_id in seen:
            raise ValidationError(f"duplicate image_id {record.image_id!r}")
        seen.add(record.image_id)
        label = record.weak_label(organ)
        if record.mask_path is not None and label != 1:
            raise ValidationError(
                f"record {record.image_id!r} has a mask but weak label 0 for {organ!r}"
            )
    if composition is Composition.ORGAN_SPECIFIC:
        for record in records:
            if record.mask_path is None:
                raise ValidationError(
                    f"organ-specific manifest requires a mask for every record; "
                    f"{record.image_id!r} has none"
                )
    else:
        for split in Split:
            pos = sum(
                1 for r in records if r.split is split and r.weak_label(organ) == 1
            )
            neg = sum(
                1 for r in records if r.split is split and r.weak_label(organ) == 0
            )
            if pos != neg:
                raise ValidationError(
                    f"supplemented manifest must pair positives and negatives 1:1; "
                    f"split {split.value} has {pos} positives and {neg} negatives"
                )


def validate_patient_disjoint(records: Iterable[ImageRecord]) -> None:
    """Reject any patient whose images appear in more than one split."""
    splits_by_patient: dict[str, set[Split]] = {}
    for record in records:
        splits_by_patient.setdefault(record.patient_id, set()).add(record.split)
    leaked = sorted(p for p, s in splits_by_patient.items() if len(s) > 1)
    if leaked:
        raise ValidationError(
            f"patient(s) {', '.join(repr(p) for p in leaked)} appear in multiple splits"
        )


# ---------------------------------------------------------------------------
# JSON-lines serialization
# ---------------------------------------------------------------------------


def _record_from_json(obj: dict, line_no: int, path) -> ImageRecord:
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: line {line_no}: expected a JSON object")
    missing = [k for k in RECORD_FIELDS if k not in obj]
    if missing:
        raise FormatError(f"{path}: line {line_no}: missing field(s) {missing}")
    extra = [k for k in obj if k not in RECORD_FIELDS]
    if extra:
        raise FormatError(f"{path}: line {line_no}: unknown field(s) {extra}")
    if not isinstance(obj["image_id"], str) or not isinstance(obj["patient_id"], str):
        raise FormatError(f"{path}: line {line_no}: image_id/patient_id must be strings")
    try:
        split = Split(obj["split"])
    except ValueError:
        raise FormatError(
            f"{path}: line {line_no}: split must be one of TRAIN/VAL/TEST, "
            f"got {obj['split']!r}"
        ) from None
    mask_path = obj["mask_path"]
    if mask_path is not None and not isinstance(mask_path, str):
        raise FormatError(f"{path}: line {line_no}: mask_path must be a string or null")
    weak = obj["weak_labels"]
    if not isinstance(weak, dict) or not all(
        isinstance(k, str) and v in (0, 1) for k, v in weak.items()
    ):
        raise FormatError(
            f"{path}: line {line_no}: weak_labels must map organ names to 0/1"
        )
    return ImageRecord(
        image_id=obj["image_id"],
        patient_id=obj["patient_id"],
        split=split,
        mask_path=mask_path,
        weak_labels=dict(weak),
    )


def load_records(path) -> list[ImageRecord]:
    """Parse a JSON-lines record file; image ids must be unique within it."""
    path = Path(path)
    records: list[ImageRecord] = []
    seen: dict[str, int] = {}
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {line_no}: invalid JSON: {exc}") from exc
            record = _record_from_json(obj, line_no, path)
            if record.image_id in seen:
                raise FormatError(
                    f"{path}: line {line_no}: duplicate image_id {record.image_id!r} "
                    f"(first seen on line {seen[record.image_id]})"
                )
            seen[record.image_id] = line_no
            records.append(record)
    return records


def record_to_json(record: ImageRecord) -> str:
    obj = {
        "image_id": record.image_id,
        "patient_id": record.patient_id,
        "split": record.split.value,
        "mask_path": record.mask_path,
        "weak_labels": record.weak_labels,
    }
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def save_records(records: Iterable[ImageRecord], path) -> None:
    path = Path(path)
    text = "".join(record_to_json(r) + "\n" for r in records)
    path.write_text(text, encoding="utf-8")


def infer_composition(organ: str, records: Sequence[ImageRecord]) -> Composition:
    if records and all(r.mask_path is not None for r in records):
        return Composition.ORGAN_SPECIFIC
    return Composition.SUPPLEMENTED


def infer_organ(records: Sequence[ImageRecord]) -> str:
    """The unique organ for which every mask-bearing record is class-positive.

    Fails when the manifest has no masks or more than one candidate organ, in
    which case the organ must be passed explicitly.
    """
    masked = [r for r in records if r.mask_path is not None]
    if not masked:
        raise ValidationError("cannot infer organ: no record carries a mask")
    candidates = set(k for k, v in masked[0].weak_labels.items() if v == 1)
    for record in masked[1:]:
        candidates &= set(k for k, v in record.weak_labels.items() if v == 1)
    if len(candidates) != 1:
        raise ValidationError(
            f"cannot infer organ: {sorted(candidates) or 'no'} shared positive weak "
            f"label(s); pass the organ explicitly"
        )
    return candidates.pop()


def load_manifest(path, organ: str | None = None) -> DatasetManifest:
    """Load and validate a manifest; composition is inferred from the records.

    Relative mask paths resolve against the manifest file's directory.
    """
    path = Path(path)
    records = load_records(path)
    if not records:
        raise FormatError(f"{path}: manifest holds no records")
    if organ is None:
        organ = infer_organ(records)
    composition = infer_composition(organ, records)
    manifest = DatasetManifest(
        organ=organ,
        records=tuple(records),
        composition=composition,
        root=path.parent,
    )
    validate_patient_disjoint(manifest.records)
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    save_records(manifest.records, path)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def supplement(
    manifest: DatasetManifest,
    pool: Sequence[ImageRecord],
    seed: int,
    ratio: float = 1.0,
) -> DatasetManifest:
    """Add randomly sampled class-negative records until each split pairs its
    positives 1:1.

    Sampling is a seeded partial Fisher-Yates shuffle over the per-split pool
    sorted by image_id, so results are reproducible and independent of pool
    file ordering. Negatives never cross splits. Output order: the original
    positives, then the sampled negatives in draw order (splits processed
    TRAIN, VAL, TEST).

    ``ratio`` is experimental and currently restricted to 1.0: any other
    value would break the supplemented-composition invariant.
    """
    if manifest.composition is not Composition.ORGAN_SPECIFIC:
        raise ValidationError("supplement expects an organ-specific manifest")
    if ratio != 1.0:
        raise ValidationError(
            "supplementation ratios other than 1.0 are not supported: the "
            "supplemented composition pairs positives and negatives 1:1"
        )
    organ = manifest.organ
    for record in pool:
        if record.weak_label(organ) == 1:
            raise ValidationError(
                f"pool record {record.image_id!r} has weak label 1 for {organ!r}"
            )
    rng = SplitMix64(seed)
    sampled: list[ImageRecord] = []
    for split in (Split.TRAIN, Split.VAL, Split.TEST):
        demand = sum(1 for r in manifest.records if r.split is split)
        split_pool = sorted(
            (r for r in pool if r.split is split), key=lambda r: r.image_id
        )
        if len(split_pool) < demand:
            raise ValidationError(
                f"insufficient negatives for split {split.value}: "
                f"need {demand}, pool has {len(split_pool)}"
            )
        drawn = rng.sample_without_replacement(split_pool, demand)
        # Sampled records join this organ's manifest outside its organ subset,
        # so any mask they carry for another purpose is dropped.
        sampled.extend(replace(r, mask_path=None) for r in drawn)
    return DatasetManifest(
        organ=organ,
        records=manifest.records + tuple(sampled),
        composition=Composition.SUPPLEMENTED,
        root=manifest.root,
    )


def manifest_stats(
    manifest: DatasetManifest,
    mask_loader: Callable[[Path], BinaryMask] = load_mask,
) -> ManifestStats:
    """Per-split counts and the mean foreground fraction of class-positive records."""
    positives = manifest.positives()
    if not positives:
        raise ValidationError("organ size is undefined: manifest has no class-positive records")
    fractions = []
    for record in positives:
        if record.mask_path is None:
            raise ValidationError(
                f"class-positive record {record.image_id!r} has no mask to measure"
            )
        mask = mask_loader(manifest.resolve(record.mask_path))
        fractions.append(mask.foreground_count() / (mask.width * mask.height))
    split_counts = {
        split: sum(1 for r in manifest.records if r.split is split) for split in Split
    }
    return ManifestStats(
        organ=manifest.organ,
        organ_size=sum(fractions) / len(fractions),
        split_counts=split_counts,
        positive_count=len(positives),
        negative_count=len(manifest.records) - len(positives),
    )


def split_filter(manifest: DatasetManifest, split: Split) -> DatasetManifest:
    """Records of one split, order preserved. Validates patient disjointness
    across splits of the input manifest first."""
    validate_patient_disjoint(manifest.records)
    records = tuple(r for r in manifest.records if r.split is split)
    return DatasetManifest(
        organ=manifest.organ,
        records=records,
        composition=manifest.composition,
        root=manifest.root,
    )


def manifest_sha256(manifest: DatasetManifest) -> str:
    """Hash of the canonical serialization plus organ and composition tag."""
    digest = hashlib.sha256()
    digest.update(manifest.organ.encode("utf-8"))
    digest.update(manifest.composition.value.encode("utf-8"))
    for record in manifest.records:
        digest.update(record_to_json(record).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()
