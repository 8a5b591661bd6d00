"""Export sessions: collect model outputs, emit engine-ready artifacts.

One session per evaluation run, no state shared between sessions. The
engine is only ever reached through its command-line interface; the bridge
carries no compile- or import-time coupling to it.
"""

from __future__ import annotations

import json
import math
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import formats
from .errors import BridgeError, EngineFailedError, EngineNotFoundError, FormatError

MAP_FORMATS = ("raw", "png16")
_MAP_SUFFIX = {"raw": ".adm", "png16": ".png"}


@dataclass
class _Entry:
    sample_id: str
    label: str
    resolution: int
    map_path: Optional[str] = None
    mask_path: Optional[str] = None


class ExportSession:
    """Collects scored test samples and writes them in the engine's formats.

    Map and mask files land on disk as samples are added; `finalize` writes
    the manifest and the score table (and `run_eval` calls it implicitly).
    Every sample becomes a test-split entry of a single-category manifest.
    """

    def __init__(
        self,
        root: str | Path,
        category: str = "exported",
        map_format: str = "raw",
        resolution: int = 256,
    ):
        if map_format not in MAP_FORMATS:
            raise FormatError(f"map_format must be one of {MAP_FORMATS}, got {map_format!r}")
        self.root = Path(root)
        self.category = category
        self.map_format = map_format
        self.default_resolution = int(resolution)
        self._entries: list[_Entry] = []
        self._scores: dict[str, float] = {}

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    @property
    def scores_path(self) -> Path:
        return self.root / "scores.csv"

    def add_sample(self, sample_id, label, score, map=None, mask=None) -> None:
        """Record one test sample; writes its map/mask files immediately."""
        if not isinstance(sample_id, str) or not sample_id:
            raise FormatError("sample_id must be a non-empty string")
        if "/" in sample_id or "\\" in sample_id:
            raise FormatError(f"sample_id {sample_id!r} must be usable as a file name")
        if sample_id in self._scores:
            raise FormatError(f"duplicate sample_id {sample_id!r}")
        if label not in ("good", "bad"):
            raise FormatError(f"label must be 'good' or 'bad', got {label!r}")
        score = float(score)
        if not math.isfinite(score):
            raise FormatError(f"sample {sample_id!r}: non-finite score")

        map_arr = None if map is None else np.asarray(map)
        mask_arr = None if mask is None else np.asarray(mask)
        if mask_arr is not None:
            if map_arr is None:
                raise FormatError(f"sample {sample_id!r}: mask given without a map")
            if mask_arr.shape != map_arr.shape:
                raise FormatError(
                    f"sample {sample_id!r}: mask shape {mask_arr.shape} "
                    f"differs from map shape {map_arr.shape}"
                )
            if label == "good" and (mask_arr > 0).any():
                # the engine rejects anomalous pixels on good samples
                raise FormatError(f"sample {sample_id!r}: good sample with anomalous mask")

        entry = _Entry(
            sample_id=sample_id,
            label=label,
            resolution=int(map_arr.shape[0]) if map_arr is not None else self.default_resolution,
        )
        if map_arr is not None:
            rel = f"maps/{sample_id}{_MAP_SUFFIX[self.map_format]}"
            if self.map_format == "raw":
                formats.write_map_raw(map_arr, self.root / rel)
            else:
                formats.write_map_png16(map_arr, self.root / rel)
            entry.map_path = rel
        if mask_arr is not None:
            rel = f"masks/{sample_id}.png"
            formats.write_mask_png(mask_arr, self.root / rel)
            entry.mask_path = rel
        self._entries.append(entry)
        self._scores[sample_id] = score

    def finalize(self) -> tuple[Path, Path]:
        """Write manifest.json and scores.csv; returns their paths."""
        if not self._entries:
            raise FormatError("cannot finalize an empty session")
        samples = [
            {
                "sample_id": e.sample_id,
                "split": "test",
                "label": e.label,
                "image_path": f"images/{e.sample_id}.png",
                "resolution": e.resolution,
                "map_path": e.map_path,
                "mask_path": e.mask_path,
            }
            for e in self._entries
        ]
        has_pixel_labels = any(e.label == "bad" and e.mask_path for e in self._entries)
        doc = formats.manifest_document(self.category, has_pixel_labels, samples)
        formats.write_manifest(doc, self.manifest_path)
        formats.write_scores_csv(self._scores, self.scores_path)
        return self.manifest_path, self.scores_path

    def run_eval(self, **kwargs) -> dict:
        return run_eval(self, **kwargs)


def run_eval(
    session: ExportSession,
    *,
    method: str = "model",
    dataset: str = "dataset",
    seed: int = 0,
    engine: str = "adeval",
    extra_args: tuple = (),
) -> dict:
    """Score the session through the engine CLI and return the parsed JSON.

    The output is exactly what `adeval score` prints for the same files and
    arguments. Engine failures surface as EngineFailedError with the exit
    code and the error payload from stderr.
    """
    manifest_path, scores_path = session.finalize()
    cmd = [
        engine,
        "score",
        "--manifest",
        str(manifest_path),
        "--scores",
        str(scores_path),
        "--maps-root",
        str(session.root),
        "--method",
        method,
        "--dataset",
        dataset,
        "--seed",
        str(seed),
        *extra_args,
    ]
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, check=False)
    except FileNotFoundError as exc:
        raise EngineNotFoundError(
            f"engine not found: {engine!r} is not an executable on PATH"
        ) from exc
    if proc.returncode != 0:
        raise EngineFailedError(proc.returncode, proc.stderr)
    try:
        return json.loads(proc.stdout)
    except json.JSONDecodeError as exc:
        raise BridgeError(f"engine emitted unparseable output: {exc}") from exc
