"""Exception hierarchy shared across the toolkit."""


class SegbiasError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(SegbiasError, ValueError):
    """An on-disk file (PGM, f32 payload, sidecar, manifest line) cannot be decoded."""


class ValidationError(SegbiasError, ValueError):
    """In-memory data violates a documented invariant or precondition."""


class TrainingError(SegbiasError, RuntimeError):
    """Training failed to make progress (divergence after maximum learning-rate halvings)."""
