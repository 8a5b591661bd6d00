"""Seeded dataset transformations for the benchmark's experiment designs.

Each protocol maps (manifest, parameters, seed) to a new manifest plus a
replayable provenance record. Selection uses per-sample priorities derived
from (seed, sample_id, protocol), so the outcome is independent of sample
order and of which other samples exist.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from decimal import Decimal, ROUND_HALF_EVEN
from pathlib import Path
from typing import Optional, Sequence

from .errors import InputError, ValidationError
from .records import DatasetManifest, SampleRecord, recompute_pixel_labels
from .seeding import Seed, priority

PROTOCOLS = ("contaminate", "supervised_split", "validation_split")


@dataclass(frozen=True)
class ProtocolRecord:
    """What a protocol did, with enough detail to replay it exactly."""

    protocol: str
    seed: int
    moved_ids: tuple[str, ...]
    parameters: dict

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValidationError(f"unknown protocol {self.protocol!r}")


def record_to_dict(record: ProtocolRecord) -> dict:
    return {
        "protocol": record.protocol,
        "seed": record.seed,
        "moved_ids": list(record.moved_ids),
        "parameters": record.parameters,
    }


def record_from_dict(doc: dict) -> ProtocolRecord:
    try:
        return ProtocolRecord(
            protocol=str(doc["protocol"]),
            seed=int(doc["seed"]),
            moved_ids=tuple(str(x) for x in doc["moved_ids"]),
            parameters=dict(doc["parameters"]),
        )
    except KeyError as exc:
        raise InputError(f"protocol record missing field {exc}") from exc


def save_record(record: ProtocolRecord, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(record_to_dict(record), indent=2) + "\n", encoding="utf-8"
    )


def load_record(path: str | Path) -> ProtocolRecord:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read protocol record {path}: {exc}") from exc
    try:
        return record_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise InputError(f"protocol record {path} is not valid JSON: {exc}") from exc


def _round_half_even(fraction: float, count: int) -> int:
    """round(fraction * count) with banker's rounding on the decimal value.

    The fraction goes through its shortest decimal repr first so 0.1 * 25
    rounds as 2.5 (to 2), not as 2.5000000000000001.
    """
    product = Decimal(str(fraction)) * count
    return int(product.quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def _pick(
    candidates: Sequence[SampleRecord], k: int, seed: Seed | int, purpose: str
) -> list[SampleRecord]:
    """k samples uniform without replacement, stable under reordering."""
    ranked = sorted(
        candidates, key=lambda s: (priority(seed, s.sample_id, purpose), s.sample_id)
    )
    return ranked[:k]


def _seed_value(seed: Seed | int) -> int:
    return seed.value if isinstance(seed, Seed) else int(seed)


def contaminate(
    manifest: DatasetManifest, percent: float, seed: Seed | int
) -> tuple[DatasetManifest, ProtocolRecord]:
    """Replace a fraction of train normals with mislabeled bad test samples.

    k = round(percent * T) with T the train-normal count; k train normals are
    deleted and k bad test samples become train samples (their true label is
    retained in the manifest and the record). Train size is preserved, test
    shrinks by k.
    """
    if not (0.0 < percent < 1.0):
        raise ValidationError(f"percent must lie in (0, 1), got {percent}")
    train_normals = [s for s in manifest.samples if s.split == "train" and s.is_good]
    test_bads = [s for s in manifest.samples if s.split == "test" and not s.is_good]
    k = _round_half_even(percent, len(train_normals))
    if len(test_bads) < k:
        raise ValidationError(
            f"contaminate needs {k} bad test samples, manifest has {len(test_bads)}"
        )
    removed = {s.sample_id for s in _pick(train_normals, k, seed, "contaminate.remove")}
    moved = {s.sample_id for s in _pick(test_bads, k, seed, "contaminate.move")}

    samples = []
    for s in manifest.samples:
        if s.sample_id in removed:
            continue
        if s.sample_id in moved:
            s = replace(s, split="train")
        samples.append(s)
    out = recompute_pixel_labels(replace(manifest, samples=tuple(samples)))
    record = ProtocolRecord(
        protocol="contaminate",
        seed=_seed_value(seed),
        moved_ids=tuple(sorted(moved)),
        parameters={
            "percent": percent,
            "replacements": k,
            "removed_train_ids": sorted(removed),
        },
    )
    return out, record


def supervised_split(
    manifest: DatasetManifest, n_anomalous: int, seed: Seed | int
) -> tuple[DatasetManifest, ProtocolRecord]:
    """Move n bad test samples into train, uniformly over all defect types.

    A manifest whose train split already contains bad samples passes through
    unchanged; the record notes it.
    """
    if n_anomalous < 0:
        raise ValidationError(f"n_anomalous must be nonnegative, got {n_anomalous}")
    train_bads = [s for s in manifest.samples if s.split == "train" and not s.is_good]
    if train_bads:
        record = ProtocolRecord(
            protocol="supervised_split",
            seed=_seed_value(seed),
            moved_ids=(),
            parameters={
                "n_anomalous": n_anomalous,
                "pass_through": True,
                "train_bad_count": len(train_bads),
            },
        )
        return manifest, record
    test_bads = [s for s in manifest.samples if s.split == "test" and not s.is_good]
    if len(test_bads) < n_anomalous:
        raise ValidationError(
            f"supervised split needs {n_anomalous} bad test samples, "
            f"manifest has {len(test_bads)}"
        )
    moved = {
        s.sample_id for s in _pick(test_bads, n_anomalous, seed, "supervised_split")
    }
    samples = tuple(
        replace(s, split="train") if s.sample_id in moved else s
        for s in manifest.samples
    )
    out = recompute_pixel_labels(replace(manifest, samples=samples))
    record = ProtocolRecord(
        protocol="supervised_split",
        seed=_seed_value(seed),
        moved_ids=tuple(sorted(moved)),
        parameters={"n_anomalous": n_anomalous, "pass_through": False},
    )
    return out, record


def validation_split(
    manifest: DatasetManifest, fraction: float = 0.10, seed: Seed | int = 0
) -> tuple[DatasetManifest, ProtocolRecord]:
    """Re-mark a fraction of train samples as the validation split.

    Stratified by label when the train split holds both classes: each label
    contributes round(fraction * label_count) samples.
    """
    if not (0.0 < fraction < 1.0):
        raise ValidationError(f"fraction must lie in (0, 1), got {fraction}")
    train = [s for s in manifest.samples if s.split == "train"]
    if not train:
        raise ValidationError("validation split requires a nonempty train split")
    moved: set[str] = set()
    for label in ("good", "bad"):
        group = [s for s in train if s.label == label]
        if not group:
            continue
        k = _round_half_even(fraction, len(group))
        moved.update(s.sample_id for s in _pick(group, k, seed, "validation_split"))
    samples = tuple(
        replace(s, split="val") if s.sample_id in moved else s
        for s in manifest.samples
    )
    record = ProtocolRecord(
        protocol="validation_split",
        seed=_seed_value(seed),
        moved_ids=tuple(sorted(moved)),
        parameters={"fraction": fraction},
    )
    return replace(manifest, samples=samples), record


def apply_record(
    manifest: DatasetManifest, record: ProtocolRecord
) -> DatasetManifest:
    """Replay a recorded protocol on the original manifest."""
    if record.protocol == "contaminate":
        out, _ = contaminate(manifest, record.parameters["percent"], record.seed)
    elif record.protocol == "supervised_split":
        out, _ = supervised_split(
            manifest, record.parameters["n_anomalous"], record.seed
        )
    else:
        out, _ = validation_split(manifest, record.parameters["fraction"], record.seed)
    return out


@dataclass(frozen=True)
class EpochTrace:
    """Validation-metric history of one training run."""

    epochs: tuple[tuple[int, float], ...]
    metric_name: str = "im.AUROC"

    def __post_init__(self) -> None:
        indices = [e for e, _ in self.epochs]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValidationError("epoch indices must be strictly increasing")


def select_epoch(trace: EpochTrace, patience: Optional[int] = None) -> int:
    """Best epoch under early stopping with the given patience.

    Scanning stops after `patience` consecutive epochs without strict
    improvement; the returned epoch is the earliest maximum seen by then.
    `patience=None` disables stopping and returns the last epoch.
    """
    if not trace.epochs:
        raise ValidationError("empty epoch trace")
    if patience is None:
        return trace.epochs[-1][0]
    if patience < 1:
        raise ValidationError(f"patience must be a positive count, got {patience}")
    best_epoch, best_value = trace.epochs[0]
    stale = 0
    for epoch, value in trace.epochs[1:]:
        if value > best_value:
            best_epoch, best_value = epoch, value
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    return best_epoch


def epochs_run(trace: EpochTrace, patience: Optional[int] = None) -> int:
    """Number of epochs actually executed before stopping."""
    if not trace.epochs:
        raise ValidationError("empty epoch trace")
    if patience is None:
        return len(trace.epochs)
    if patience < 1:
        raise ValidationError(f"patience must be a positive count, got {patience}")
    best_value = trace.epochs[0][1]
    stale = 0
    for i, (_, value) in enumerate(trace.epochs[1:], start=2):
        if value > best_value:
            best_value = value
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                return i
    return len(trace.epochs)
