"""Weighted cross-entropy loss over foreground, background and supplementary
negative samples, with per-term breakdown and analytic per-pixel gradients.

All logs are natural. Each image is normalised by its own pixel count N, so a
batch loss is just the sum over images. A supplementary negative sample is an
image known to contain no foreground: every pixel contributes background loss.

    l_pos   = -(w_pos / N) * sum_i  y_i * log(p_i)
    l_neg   = -(w_neg / N) * sum_i (1 - y_i) * log(1 - p_i)
    l_suppl =  sum over samples z of -(w_neg / N_z) * sum_i log(1 - z_i)
    l_comb  =  l_pos + l_neg + l_suppl
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .masks import BinaryMask, ProbMap


@dataclass(frozen=True)
class LossWeights:
    """Multipliers for the foreground and background loss terms."""

    w_pos: float = 1.0
    w_neg: float = 1.0

    def __post_init__(self) -> None:
        for name in ("w_pos", "w_neg"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValidationError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class LossBreakdown:
    l_pos: float
    l_neg: float
    l_suppl: float
    l_comb: float


@dataclass(frozen=True, eq=False)
class LossGradient:
    """d l_comb / d p for every pixel of the positive image (if any) and of
    each supplementary sample. Foreground pixels have strictly negative
    entries; background and supplementary pixels strictly positive."""

    positive: np.ndarray | None  # shape (H, W) or None when no positive image
    supplementary: tuple[np.ndarray, ...]


def _check_pair(prob: ProbMap, gt: BinaryMask) -> None:
    if (prob.width, prob.height) != (gt.width, gt.height):
        raise ValidationError(
            f"dimension mismatch: prob {prob.width}x{prob.height} "
            f"vs gt {gt.width}x{gt.height}"
        )


def loss_pos(prob: ProbMap, gt: BinaryMask, w_pos: float = 1.0) -> float:
    """Foreground term: -(w_pos / N) * sum over foreground pixels of log(p)."""
    _check_pair(prob, gt)
    n = prob.width * prob.height
    fg = gt.data
    if not fg.any():
        return 0.0
    return float(-w_pos * np.log(prob.data[fg]).sum() / n)


def loss_neg(prob: ProbMap, gt: BinaryMask, w_neg: float = 1.0) -> float:
    """Background term: -(w_neg / N) * sum over background pixels of log(1 - p)."""
    _check_pair(prob, gt)
    n = prob.width * prob.height
    bg = ~gt.data
    if not bg.any():
        return 0.0
    return float(-w_neg * np.log1p(-prob.data[bg]).sum() / n)


def loss_suppl(suppl_probs: Sequence[ProbMap], w_neg: float = 1.0) -> float:
    """Supplementary term: every pixel of every sample is background."""
    total = 0.0
    for z in suppl_probs:
        n = z.width * z.height
        total += float(-w_neg * np.log1p(-z.data).sum() / n)
    return total


def loss_comb(
    prob: ProbMap | None,
    gt: BinaryMask | None,
    suppl_probs: Sequence[ProbMap] = (),
    weights: LossWeights = LossWeights(),
) -> LossBreakdown:
    """Combined weighted loss with a per-term breakdown.

    ``prob``/``gt`` may both be None for a batch made only of supplementary
    samples (e.g. a class-negative training image).
    """
    if (prob is None) != (gt is None):
        raise ValidationError("prob and gt must be given together (or both omitted)")
    l_p = 0.0 if prob is None else loss_pos(prob, gt, weights.w_pos)
    l_n = 0.0 if prob is None else loss_neg(prob, gt, weights.w_neg)
    l_s = loss_suppl(suppl_probs, weights.w_neg)
    return LossBreakdown(l_pos=l_p, l_neg=l_n, l_suppl=l_s, l_comb=l_p + l_n + l_s)


def loss_gradient(
    prob: ProbMap | None,
    gt: BinaryMask | None,
    suppl_probs: Sequence[ProbMap] = (),
    weights: LossWeights = LossWeights(),
) -> LossGradient:
    """Analytic per-pixel derivative of the combined loss.

        foreground pixel:    -w_pos / (N * p_i)
        background pixel:    +w_neg / (N * (1 - p_i))
        supplementary pixel: +w_neg / (N_z * (1 - z_i))
    """
    if (prob is None) != (gt is None):
        raise ValidationError("prob and gt must be given together (or both omitted)")
    positive: np.ndarray | None = None
    if prob is not None:
        _check_pair(prob, gt)
        n = prob.width * prob.height
        fg = gt.data
        grad = np.where(
            fg,
            -weights.w_pos / (n * prob.data),
            weights.w_neg / (n * (1.0 - prob.data)),
        )
        grad.flags.writeable = False
        positive = grad
    suppl_grads = []
    for z in suppl_probs:
        n_z = z.width * z.height
        g = weights.w_neg / (n_z * (1.0 - z.data))
        g.flags.writeable = False
        suppl_grads.append(g)
    return LossGradient(positive=positive, supplementary=tuple(suppl_grads))
