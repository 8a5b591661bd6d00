"""The evaluation engine's on-disk formats, re-implemented for export.

The bridge deliberately never imports the engine: these writers mirror its
formats byte for byte, and the test suite pins that with golden files plus
direct byte comparisons against the engine's own writers.

Formats:
  * raw anomaly map: magic b"ADM1", u32 height, u32 width (little endian),
    row-major little-endian float32 payload;
  * 16-bit grayscale PNG map, scores in [0, 1] scaled by 65535;
  * mask: 8-bit grayscale PNG, anomalous pixels stored as 255;
  * image scores: CSV with header sample_id,score, full-precision floats;
  * manifest: indented JSON, keys in the engine's canonical order.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError

RAW_MAGIC = b"ADM1"


def _check_map(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.shape[0] <= 0 or arr.shape[1] <= 0:
        raise FormatError(f"anomaly map must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating) and not np.issubdtype(arr.dtype, np.integer):
        raise FormatError(f"anomaly map must hold real numbers, got dtype {arr.dtype}")
    arr = arr.astype(np.float64, copy=False)
    if not np.isfinite(arr).all():
        raise FormatError("refusing to write non-finite scores")
    return arr


def write_map_raw(values, path: str | Path) -> None:
    arr = np.ascontiguousarray(_check_map(values), dtype="<f4")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(arr.tobytes())


def write_map_png16(values, path: str | Path) -> None:
    arr = _check_map(values)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise FormatError("16-bit PNG maps require scores in [0, 1]")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(arr * 65535.0).astype(np.uint16)).save(path, format="PNG")


def write_mask_png(values, path: str | Path) -> None:
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.shape[0] <= 0 or arr.shape[1] <= 0:
        raise FormatError(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
    binary = (arr > 0).astype(np.uint8) * 255
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(binary, mode="L").save(path, format="PNG")


def write_scores_csv(scores: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "score"])
        for sid, value in scores.items():
            writer.writerow([sid, repr(float(value))])


# per-sample key order of the engine's manifest writer
_SAMPLE_KEYS = ("sample_id", "split", "label", "image_path", "resolution")
_OPTIONAL_KEYS = ("defect_type", "map_path", "mask_path")


def manifest_document(category: str, has_pixel_labels: bool, samples: list[dict]) -> dict:
    doc_samples = []
    for sample in samples:
        entry = {key: sample[key] for key in _SAMPLE_KEYS}
        for key in _OPTIONAL_KEYS:
            if sample.get(key) is not None:
                entry[key] = sample[key]
        doc_samples.append(entry)
    return {
        "category": category,
        "has_pixel_labels": has_pixel_labels,
        "samples": doc_samples,
    }


def write_manifest(doc: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
