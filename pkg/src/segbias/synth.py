"""Deterministic synthetic dataset generator.

Each class-positive image holds one axis-aligned ellipse whose rasterized
area lands within +/-20% of the requested foreground fraction; class-negative
images are background texture only. Intensities are a two-level signal
(foreground/background means) plus Gaussian noise, clipped to [0, 1]. All
randomness flows through per-image splitmix64 substreams (base seed XOR image
index), so identical configs produce identical bytes on disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .manifest import (
    Composition,
    DatasetManifest,
    ImageRecord,
    Split,
    manifest_stats,
    save_manifest,
)
from .masks import BinaryMask, save_intensity, save_mask
from .rng import SplitMix64

_SPLIT_ORDER = (Split.TRAIN, Split.VAL, Split.TEST)
_AREA_TOLERANCE = 0.20
_MAX_FIT_ITERATIONS = 16


@dataclass(frozen=True)
class SynthConfig:
    """Parameters for one generated dataset.

    Per-split counts are (TRAIN, VAL, TEST) triples. Negative counts must be
    all zero (organ-specific dataset) or equal the positive counts
    (supplemented dataset); anything else has no valid composition.
    """

    fg_fraction: float
    seed: int
    width: int = 64
    height: int = 64
    n_positive: tuple[int, int, int] = (30, 10, 15)
    n_negative: tuple[int, int, int] = (30, 10, 15)
    n_patients: tuple[int, int, int] = (3, 2, 2)
    noise_sigma: float = 0.15
    # Contrast chosen so the bundled pixel classifier lands mid-range F1:
    # strong enough to learn from, weak enough that class weighting and data
    # composition visibly move the metrics.
    fg_level: float = 0.6
    bg_level: float = 0.4
    organ: str = "blob"

    def __post_init__(self) -> None:
        if not (0.005 <= self.fg_fraction <= 0.5):
            raise ValidationError(
                f"fg_fraction must lie in [0.005, 0.5], got {self.fg_fraction}"
            )
        if self.width < 3 or self.height < 3:
            raise ValidationError("image size must be at least 3x3")
        if sum(self.n_positive) == 0:
            raise ValidationError("config generates no class-positive images")
        if any(n < 0 for n in self.n_positive + self.n_negative):
            raise ValidationError("record counts must be non-negative")
        if any(n < 1 for n in self.n_patients):
            raise ValidationError("each split needs at least one patient")
        if not all(n == 0 for n in self.n_negative) and self.n_negative != self.n_positive:
            raise ValidationError(
                "n_negative must be all zero (organ-specific) or equal n_positive "
                "(supplemented); no composition fits "
                f"{self.n_negative} negatives against {self.n_positive} positives"
            )
        if not (0.0 <= self.noise_sigma <= 1.0):
            raise ValidationError("noise_sigma must lie in [0, 1]")

    @property
    def composition(self) -> Composition:
        if all(n == 0 for n in self.n_negative):
            return Composition.ORGAN_SPECIFIC
        return Composition.SUPPLEMENTED


def _ellipse_mask(config: SynthConfig, rng: SplitMix64) -> np.ndarray:
    """Rasterize one ellipse whose pixel area is within tolerance of target."""
    w, h = config.width, config.height
    target = config.fg_fraction * w * h
    aspect = math.exp((rng.next_float() * 2.0 - 1.0) * math.log(2.0))  # in [1/2, 2]
    u_cx = rng.next_float()
    u_cy = rng.next_float()
    a = math.sqrt(target * aspect / math.pi)
    b = math.sqrt(target / (aspect * math.pi))
    max_a = (w - 1) / 2.0
    max_b = (h - 1) / 2.0
    if a > max_a or b > max_b:
        raise ValidationError(
            f"fg_fraction {config.fg_fraction} is unachievable: ellipse "
            f"{a:.1f}x{b:.1f} exceeds the {w}x{h} image"
        )
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    for _ in range(_MAX_FIT_ITERATIONS):
        cx = a + u_cx * (w - 1 - 2.0 * a)
        cy = b + u_cy * (h - 1 - 2.0 * b)
        dx2 = ((cols - cx) / a) ** 2
        dy2 = ((rows - cy) / b) ** 2
        mask = dy2[:, None] + dx2[None, :] <= 1.0
        count = int(mask.sum())
        if count > 0 and abs(count - target) <= _AREA_TOLERANCE * target:
            return mask
        scale = 1.3 if count == 0 else math.sqrt(target / count)
        a = min(a * scale, max_a)
        b = min(b * scale, max_b)
    raise ValidationError(
        f"could not fit an ellipse within {_AREA_TOLERANCE:.0%} of "
        f"fg_fraction {config.fg_fraction} in a {w}x{h} image"
    )


def _noisy_intensity(
    config: SynthConfig, mask: np.ndarray | None, rng: SplitMix64
) -> np.ndarray:
    w, h = config.width, config.height
    levels = np.full((h, w), config.bg_level)
    if mask is not None:
        levels[mask] = config.fg_level
    noise = np.fromiter(
        (rng.next_gauss() for _ in range(w * h)), dtype=np.float64, count=w * h
    ).reshape(h, w)
    return np.clip(levels + config.noise_sigma * noise, 0.0, 1.0)


def generate(config: SynthConfig, out_dir) -> DatasetManifest:
    """Write a full dataset (images, masks, manifest) and return its manifest."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    records: list[ImageRecord] = []
    image_index = 0
    for split_pos, split in enumerate(_SPLIT_ORDER):
        n_pos = config.n_positive[split_pos]
        n_neg = config.n_negative[split_pos]
        n_patients = config.n_patients[split_pos]
        tag = split.value.lower()
        in_split = 0
        for kind, count in (("pos", n_pos), ("neg", n_neg)):
            for i in range(count):
                image_id = f"{tag}_{kind}{i:04d}"
                patient_id = f"pt_{tag}_{in_split % n_patients:02d}"
                in_split += 1
                rng = SplitMix64(config.seed ^ image_index)
                image_index += 1
                if kind == "pos":
                    ellipse = _ellipse_mask(config, rng)
                    mask = BinaryMask.from_array(ellipse)
                    save_mask(mask, out_dir / "masks" / f"{image_id}.pgm")
                    intensity = _noisy_intensity(config, ellipse, rng)
                    mask_path = f"masks/{image_id}.pgm"
                    weak = {config.organ: 1}
                else:
                    intensity = _noisy_intensity(config, None, rng)
                    mask_path = None
                    weak = {config.organ: 0}
                save_intensity(intensity, out_dir / "images" / f"{image_id}.f32")
                records.append(
                    ImageRecord(
                        image_id=image_id,
                        patient_id=patient_id,
                        split=split,
                        mask_path=mask_path,
                        weak_labels=weak,
                    )
                )
    manifest = DatasetManifest(
        organ=config.organ,
        records=tuple(records),
        composition=config.composition,
        root=out_dir,
    )
    save_manifest(manifest, out_dir / "manifest.jsonl")
    stats = manifest_stats(manifest)
    if abs(stats.organ_size - config.fg_fraction) > _AREA_TOLERANCE * config.fg_fraction:
        raise ValidationError(
            f"generated mean foreground fraction {stats.organ_size:.4f} misses the "
            f"target {config.fg_fraction:.4f} by more than {_AREA_TOLERANCE:.0%}"
        )
    return manifest


def size_ladder(
    config: SynthConfig, fractions: Sequence[float], out_dir
) -> list[DatasetManifest]:
    """One generated dataset per foreground fraction, seeds offset by index."""
    if list(fractions) != sorted(set(fractions)) or not fractions:
        raise ValidationError("fractions must be non-empty and strictly ascending")
    out_dir = Path(out_dir)
    manifests = []
    for index, fraction in enumerate(fractions):
        rung = replace(config, fg_fraction=float(fraction), seed=config.seed + index)
        manifests.append(generate(rung, out_dir / f"fg_{fraction:.4f}"))
    return manifests
