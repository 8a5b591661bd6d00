"""Dataset manifests: the declarative index every engine command consumes.

A manifest is one JSON document per object category listing samples with
their split, label, and file paths. All records are immutable after parsing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from .errors import InputError, ValidationError

SPLITS = ("train", "val", "test")
LABELS = ("good", "bad")


@dataclass(frozen=True)
class SampleRecord:
    """One image: identity, split membership, label, and file locations."""

    sample_id: str
    split: str
    label: str
    image_path: str
    resolution: int
    defect_type: Optional[str] = None
    map_path: Optional[str] = None
    mask_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValidationError(f"sample {self.sample_id!r}: unknown split {self.split!r}")
        if self.label not in LABELS:
            raise ValidationError(f"sample {self.sample_id!r}: unknown label {self.label!r}")
        if not isinstance(self.resolution, int) or self.resolution <= 0:
            raise ValidationError(
                f"sample {self.sample_id!r}: resolution must be a positive integer"
            )

    @property
    def is_good(self) -> bool:
        return self.label == "good"


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered sample list for one category plus pixel-label availability."""

    category: str
    samples: tuple[SampleRecord, ...]
    has_pixel_labels: bool
    source_path: Optional[str] = field(default=None, compare=False)

    def by_split(self, split: str) -> tuple[SampleRecord, ...]:
        return tuple(s for s in self.samples if s.split == split)

    def sample_ids(self) -> tuple[str, ...]:
        return tuple(s.sample_id for s in self.samples)


@dataclass(frozen=True)
class Violation:
    """One broken manifest invariant, tied to the offending sample when any."""

    rule: str
    message: str
    sample_id: Optional[str] = None


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise InputError(f"{context}: missing required field {key!r}")
    return obj[key]


def manifest_from_dict(doc: dict, source_path: str | None = None) -> DatasetManifest:
    if not isinstance(doc, dict):
        raise InputError("manifest root must be a JSON object")
    category = _require(doc, "category", "manifest")
    raw_samples = _require(doc, "samples", "manifest")
    if not isinstance(raw_samples, list):
        raise InputError("manifest: samples must be a list")
    samples = []
    for i, entry in enumerate(raw_samples):
        context = f"manifest sample #{i}"
        if not isinstance(entry, dict):
            raise InputError(f"{context}: must be an object")
        resolution = _require(entry, "resolution", context)
        if isinstance(resolution, bool) or not isinstance(resolution, int):
            raise InputError(f"{context}: resolution must be an integer")
        samples.append(
            SampleRecord(
                sample_id=str(_require(entry, "sample_id", context)),
                split=str(_require(entry, "split", context)),
                label=str(_require(entry, "label", context)),
                image_path=str(_require(entry, "image_path", context)),
                resolution=resolution,
                defect_type=entry.get("defect_type"),
                map_path=entry.get("map_path"),
                mask_path=entry.get("mask_path"),
            )
        )
    return DatasetManifest(
        category=str(category),
        samples=tuple(samples),
        has_pixel_labels=bool(_require(doc, "has_pixel_labels", "manifest")),
        source_path=source_path,
    )


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    samples = []
    for s in manifest.samples:
        entry = {
            "sample_id": s.sample_id,
            "split": s.split,
            "label": s.label,
            "image_path": s.image_path,
            "resolution": s.resolution,
        }
        if s.defect_type is not None:
            entry["defect_type"] = s.defect_type
        if s.map_path is not None:
            entry["map_path"] = s.map_path
        if s.mask_path is not None:
            entry["mask_path"] = s.mask_path
        samples.append(entry)
    return {
        "category": manifest.category,
        "has_pixel_labels": manifest.has_pixel_labels,
        "samples": samples,
    }


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest {path} is not valid JSON: {exc}") from exc
    return manifest_from_dict(doc, source_path=str(path))


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest_to_dict(manifest), indent=2) + "\n", encoding="utf-8")


def resolve_path(raw: str, base_dir: str | Path | None) -> Path:
    p = Path(raw)
    if p.is_absolute() or base_dir is None:
        return p
    return Path(base_dir) / p


def recompute_pixel_labels(manifest: DatasetManifest) -> DatasetManifest:
    """Restore the has_pixel_labels invariant after samples changed splits."""
    has = any(s.split == "test" and not s.is_good and s.mask_path for s in manifest.samples)
    if has == manifest.has_pixel_labels:
        return manifest
    return replace(manifest, has_pixel_labels=has)


def validate_manifest(
    manifest: DatasetManifest,
    base_dir: str | Path | None = None,
    check_mask_content: bool = True,
) -> list[Violation]:
    """Check every statically checkable manifest invariant.

    Returns an empty list iff the manifest is well formed. With
    `check_mask_content`, masks attached to good samples are loaded and must
    be all-zero; unresolvable mask files surface as violations rather than
    exceptions so one bad path does not hide the remaining findings.
    """
    violations: list[Violation] = []

    seen: set[str] = set()
    duplicates: set[str] = set()
    for s in manifest.samples:
        if s.sample_id in seen:
            duplicates.add(s.sample_id)
        seen.add(s.sample_id)
    for sid in sorted(duplicates):
        violations.append(Violation("unique-sample-id", f"duplicate sample_id {sid!r}", sid))

    test = manifest.by_split("test")
    n_good = sum(1 for s in test if s.is_good)
    n_bad = len(test) - n_good
    if n_good == 0 or n_bad == 0:
        violations.append(
            Violation(
                "test-class-balance",
                f"test split needs at least one good and one bad sample "
                f"(got {n_good} good, {n_bad} bad)",
            )
        )

    bad_test_with_mask = any(not s.is_good and s.mask_path for s in test)
    if manifest.has_pixel_labels != bad_test_with_mask:
        violations.append(
            Violation(
                "pixel-label-flag",
                "has_pixel_labels must be true iff some bad test sample carries a mask "
                f"(flag={manifest.has_pixel_labels}, masks present={bad_test_with_mask})",
            )
        )

    if check_mask_content:
        from .maps import load_mask  # deferred: avoid import cycle at module load

        for s in manifest.samples:
            if not (s.is_good and s.mask_path):
                continue
            mask_file = resolve_path(s.mask_path, base_dir)
            if not mask_file.exists():
                violations.append(
                    Violation(
                        "mask-readable",
                        f"mask file {mask_file} does not exist",
                        s.sample_id,
                    )
                )
                continue
            mask = load_mask(mask_file)
            if mask.values.any():
                violations.append(
                    Violation(
                        "good-mask-empty",
                        "good sample has anomalous mask pixels",
                        s.sample_id,
                    )
                )

    return violations
