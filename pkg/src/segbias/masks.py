"""Binary masks, probability maps, and their on-disk formats.

Masks travel as binary PGM (P5, maxval 255, foreground = 255). Probability
maps and intensity images travel as a raw little-endian float32 payload
(``<name>.f32``) plus a JSON sidecar (``<name>.json``) holding exactly
``{"width": W, "height": H}``. Both formats round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

#: Probabilities are clamped into [EPSILON, 1 - EPSILON] so log(p) and
#: log(1 - p) stay finite.
EPSILON = 1e-7

_WHITESPACE = b" \t\n\r\x0b\x0c"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Immutable H x W boolean grid; True marks foreground."""

    width: int
    height: int
    data: np.ndarray  # shape (height, width), dtype bool, read-only

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValidationError(
                f"mask dimensions must be >= 1, got {self.width}x{self.height}"
            )
        arr = np.asarray(self.data)
        if arr.ndim == 1:
            if arr.size != self.width * self.height:
                raise ValidationError(
                    f"mask payload has {arr.size} pixels, expected "
                    f"{self.width}x{self.height}={self.width * self.height}"
                )
            arr = arr.reshape(self.height, self.width)
        elif arr.shape != (self.height, self.width):
            raise ValidationError(
                f"mask array shape {arr.shape} does not match "
                f"(height={self.height}, width={self.width})"
            )
        object.__setattr__(self, "data", _freeze(arr.astype(bool, copy=True)))

    @classmethod
    def from_array(cls, arr) -> "BinaryMask":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValidationError(f"expected a 2-D array, got ndim={arr.ndim}")
        return cls(width=arr.shape[1], height=arr.shape[0], data=arr)

    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.data))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.data, other.data))
        )


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Immutable H x W grid of foreground probabilities in [EPSILON, 1 - EPSILON].

    Construction rejects NaN and values outside [0, 1]; in-range values are
    clamped into the open interval so downstream logs never diverge.
    """

    width: int
    height: int
    data: np.ndarray  # shape (height, width), dtype float64, read-only

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValidationError(
                f"probability map dimensions must be >= 1, got {self.width}x{self.height}"
            )
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 1:
            if arr.size != self.width * self.height:
                raise ValidationError(
                    f"probability payload has {arr.size} pixels, expected "
                    f"{self.width * self.height}"
                )
            arr = arr.reshape(self.height, self.width)
        elif arr.shape != (self.height, self.width):
            raise ValidationError(
                f"probability array shape {arr.shape} does not match "
                f"(height={self.height}, width={self.width})"
            )
        bad = ~np.isfinite(arr) | (arr < 0.0) | (arr > 1.0)
        if bad.any():
            index = int(np.flatnonzero(bad.ravel())[0])
            raise ValidationError(
                f"probability out of range at pixel {index}: {arr.ravel()[index]!r}"
            )
        arr = np.clip(arr, EPSILON, 1.0 - EPSILON)
        object.__setattr__(self, "data", _freeze(arr))

    @classmethod
    def from_array(cls, arr) -> "ProbMap":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"expected a 2-D array, got ndim={arr.ndim}")
        return cls(width=arr.shape[1], height=arr.shape[0], data=arr)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.data, other.data))
        )


# ---------------------------------------------------------------------------
# PGM (P5) masks
# ---------------------------------------------------------------------------


def _next_token(blob: bytes, pos: int, path) -> tuple[bytes, int, int]:
    """Skip whitespace/comments, return (token, token_start, pos_after)."""
    n = len(blob)
    while pos < n:
        if blob[pos : pos + 1] in (b"#",):
            while pos < n and blob[pos : pos + 1] != b"\n":
                pos += 1
        elif blob[pos : pos + 1] in _WHITESPACE:
            pos += 1
        else:
            break
    if pos >= n:
        raise FormatError(f"{path}: malformed header: unexpected end of file at byte {pos}")
    start = pos
    while pos < n and blob[pos : pos + 1] not in _WHITESPACE and blob[pos : pos + 1] != b"#":
        pos += 1
    return blob[start:pos], start, pos


def _header_int(blob: bytes, pos: int, path, what: str) -> tuple[int, int, int]:
    token, start, pos = _next_token(blob, pos, path)
    if not token.isdigit():
        raise FormatError(
            f"{path}: malformed header: expected {what} at byte {start}, got {token!r}"
        )
    return int(token), start, pos


def load_mask(path) -> BinaryMask:
    """Decode a binary PGM (P5, maxval 255). Any nonzero byte is foreground."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:2] != b"P5":
        raise FormatError(f"{path}: malformed header: expected magic 'P5' at byte 0")
    width, _, pos = _header_int(blob, 2, path, "width")
    height, _, pos = _header_int(blob, pos, path, "height")
    maxval, maxval_at, pos = _header_int(blob, pos, path, "maxval")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: malformed header: zero-size image {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} at byte {maxval_at}")
    if pos >= len(blob) or blob[pos : pos + 1] not in _WHITESPACE:
        raise FormatError(f"{path}: malformed header: missing separator at byte {pos}")
    pos += 1  # exactly one whitespace byte before the payload
    payload = blob[pos:]
    expected = width * height
    if len(payload) < expected:
        raise FormatError(
            f"{path}: truncated payload: expected {expected} bytes from byte {pos}, "
            f"found {len(payload)}"
        )
    if len(payload) > expected:
        raise FormatError(
            f"{path}: trailing data after payload at byte {pos + expected}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return BinaryMask(width=width, height=height, data=pixels != 0)


def save_mask(mask: BinaryMask, path) -> None:
    """Write a canonical P5 PGM: foreground = 255, background = 0."""
    path = Path(path)
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    payload = np.where(mask.data, np.uint8(255), np.uint8(0)).tobytes()
    path.write_bytes(header + payload)


# ---------------------------------------------------------------------------
# f32 + JSON sidecar payloads (probability maps and intensity images)
# ---------------------------------------------------------------------------


def _sidecar_path(payload_path: Path) -> Path:
    return payload_path.with_suffix(".json")


def _read_f32_pair(path) -> np.ndarray:
    """Read an f32 payload + sidecar; returns float64 (H, W) without range checks."""
    payload_path = Path(path)
    sidecar_path = _sidecar_path(payload_path)
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{sidecar_path}: invalid JSON sidecar: {exc}") from exc
    if not isinstance(sidecar, dict) or set(sidecar) != {"width", "height"}:
        raise FormatError(
            f"{sidecar_path}: sidecar must hold exactly the keys 'width' and 'height'"
        )
    width, height = sidecar["width"], sidecar["height"]
    if not (isinstance(width, int) and isinstance(height, int) and width >= 1 and height >= 1):
        raise FormatError(f"{sidecar_path}: width/height must be positive integers")
    blob = payload_path.read_bytes()
    expected = 4 * width * height
    if len(blob) != expected:
        raise FormatError(
            f"{payload_path}: payload is {len(blob)} bytes, sidecar implies {expected}"
        )
    values = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    return values.reshape(height, width)


def _write_f32_pair(values: np.ndarray, path) -> None:
    payload_path = Path(path)
    sidecar_path = _sidecar_path(payload_path)
    height, width = values.shape
    payload_path.write_bytes(np.ascontiguousarray(values, dtype="<f4").tobytes())
    sidecar = json.dumps({"width": width, "height": height}, separators=(",", ":"))
    sidecar_path.write_text(sidecar + "\n", encoding="utf-8")


def _check_unit_range(values: np.ndarray, path) -> None:
    bad = ~np.isfinite(values) | (values < 0.0) | (values > 1.0)
    if bad.any():
        index = int(np.flatnonzero(bad.ravel())[0])
        raise FormatError(
            f"{path}: value out of range [0, 1] at pixel {index}: {values.ravel()[index]!r}"
        )


def load_probmap(path) -> ProbMap:
    """Load an f32 probability map; in-range values are clamped to [EPSILON, 1 - EPSILON]."""
    values = _read_f32_pair(path)
    _check_unit_range(values, Path(path))
    return ProbMap.from_array(values)


def save_probmap(probmap: ProbMap, path) -> None:
    """Write the stored (already clamped) values as little-endian float32."""
    _write_f32_pair(probmap.data, path)


def load_intensity(path) -> np.ndarray:
    """Load an f32 intensity image in [0, 1]; no clamping is applied."""
    values = _read_f32_pair(path)
    _check_unit_range(values, Path(path))
    return _freeze(values)


def save_intensity(values: np.ndarray, path) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValidationError(f"intensity image must be 2-D, got ndim={values.ndim}")
    if (~np.isfinite(values) | (values < 0.0) | (values > 1.0)).any():
        raise ValidationError("intensity values must lie in [0, 1]")
    _write_f32_pair(values, path)
