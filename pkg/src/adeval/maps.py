"""Anomaly-map and mask containers plus their on-disk formats.

Two map formats are supported and detected by content:
  * raw tensor: magic b"ADM1", u32 height, u32 width (little endian),
    float32 row-major payload;
  * 16-bit grayscale PNG, linearly mapped to [0, 1] (value / 65535).
Masks are 8-bit grayscale PNG, binarized at value > 0.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError, ValidationError

RAW_MAGIC = b"ADM1"
_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class AnomalyMap:
    """Dense grid of finite real anomaly scores, higher = more anomalous."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = self.values
        if v.ndim != 2 or v.shape[0] <= 0 or v.shape[1] <= 0:
            raise ValidationError(f"anomaly map must be a non-empty 2-D grid, got shape {v.shape}")
        if not np.issubdtype(v.dtype, np.floating):
            raise ValidationError(f"anomaly map must hold floats, got dtype {v.dtype}")
        if not np.isfinite(v).all():
            raise ValidationError("anomaly map contains non-finite score")
        v.setflags(write=False)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PixelMask:
    """Dense binary ground-truth grid, 1 = anomalous pixel."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = self.values
        if v.ndim != 2 or v.shape[0] <= 0 or v.shape[1] <= 0:
            raise ValidationError(f"pixel mask must be a non-empty 2-D grid, got shape {v.shape}")
        if v.dtype != np.uint8:
            raise ValidationError(f"pixel mask must be uint8, got dtype {v.dtype}")
        if not np.isin(v, (0, 1)).all():
            raise ValidationError("pixel mask values must be 0 or 1")
        v.setflags(write=False)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def write_map_raw(values: np.ndarray, path: str | Path) -> None:
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValidationError(f"raw map payload must be 2-D, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ValidationError("refusing to write non-finite scores")
    h, w = values.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(values.tobytes())


def _load_map_raw(path: Path, blob: bytes) -> AnomalyMap:
    if len(blob) < 12:
        raise InputError(f"{path}: truncated raw map header")
    h, w = struct.unpack_from("<II", blob, 4)
    expected = 12 + 4 * h * w
    if len(blob) != expected:
        raise InputError(f"{path}: raw map payload is {len(blob)} bytes, expected {expected}")
    values = np.frombuffer(blob, dtype="<f4", count=h * w, offset=12).reshape(h, w)
    if not np.isfinite(values).all():
        raise ValidationError(f"{path}: non-finite score in anomaly map")
    return AnomalyMap(values.copy())


def _load_map_png(path: Path) -> AnomalyMap:
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise InputError(f"{path}: map PNG must be single-channel grayscale")
    if arr.dtype not in (np.uint16, np.int32, np.uint8):
        raise InputError(f"{path}: unsupported PNG sample depth {arr.dtype}")
    return AnomalyMap((arr.astype(np.float32)) / 65535.0)


def write_map_png16(values: np.ndarray, path: str | Path) -> None:
    """Quantize scores in [0, 1] onto the 16-bit grayscale PNG scale."""
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise ValidationError("refusing to write non-finite scores")
    if values.min() < 0.0 or values.max() > 1.0:
        raise ValidationError("16-bit PNG maps require scores in [0, 1]")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(values * 65535.0).astype(np.uint16)).save(path, format="PNG")


def load_map(path: str | Path) -> AnomalyMap:
    """Load an anomaly map, dispatching on the file's magic bytes."""
    path = Path(path)
    blob = _read_bytes(path)
    if blob[:4] == RAW_MAGIC:
        return _load_map_raw(path, blob)
    if blob[:8] == _PNG_MAGIC:
        return _load_map_png(path)
    raise InputError(f"{path}: unrecognized anomaly-map format")


def load_mask(path: str | Path) -> PixelMask:
    path = Path(path)
    _read_bytes(path)  # surface I/O problems as InputError before PIL does
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except Exception as exc:
        raise InputError(f"{path}: cannot decode mask image: {exc}") from exc
    if arr.ndim != 2:
        raise InputError(f"{path}: mask must be single-channel grayscale")
    return PixelMask((arr > 0).astype(np.uint8))


def write_mask_png(values: np.ndarray, path: str | Path) -> None:
    values = np.asarray(values)
    binary = (values > 0).astype(np.uint8) * 255
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(binary, mode="L").save(path, format="PNG")


def read_scores_csv(path: str | Path) -> dict[str, float]:
    """Read image-level scores (header: sample_id,score) into a dict."""
    path = Path(path)
    scores: dict[str, float] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip() for c in header[:2]] != ["sample_id", "score"]:
                raise InputError(f"{path}: expected CSV header 'sample_id,score'")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) < 2:
                    raise InputError(f"{path}:{lineno}: expected 'sample_id,score'")
                sid = row[0].strip()
                try:
                    value = float(row[1])
                except ValueError as exc:
                    raise InputError(f"{path}:{lineno}: bad score {row[1]!r}") from exc
                if not np.isfinite(value):
                    raise ValidationError(f"{path}:{lineno}: non-finite score for {sid!r}")
                if sid in scores:
                    raise ValidationError(f"{path}:{lineno}: duplicate sample_id {sid!r}")
                scores[sid] = value
    except OSError as exc:
        raise InputError(f"cannot read scores {path}: {exc}") from exc
    return scores


def write_scores_csv(scores: dict[str, float], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "score"])
        for sid, value in scores.items():
            writer.writerow([sid, repr(float(value))])
