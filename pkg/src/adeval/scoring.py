"""One-category evaluation: manifest + scores (+ maps) -> seven metrics.

Image metrics always run over the test split. Pixel metrics run when the
manifest advertises pixel labels and every test sample carries an anomaly
map; good samples without a mask file contribute all-normal pixels. Any
unreadable or mismatched per-sample file fails with the sample_id named.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import EngineError, ValidationError
from .image_metrics import LabeledScores, MetricValue, score_image_metrics
from .maps import AnomalyMap, PixelMask, load_map, load_mask
from .pixel_metrics import (
    DEFAULT_BINS,
    DEFAULT_FPR_CAP,
    EXACT_PIXEL_LIMIT,
    build_pool,
    pro_curve,
    score_pixel_metrics,
)
from .records import DatasetManifest, SampleRecord, resolve_path, validate_manifest


@dataclass(frozen=True)
class CategoryScores:
    category: str
    metrics: dict[str, MetricValue]
    n_test_good: int
    n_test_bad: int
    pixel_mode: str  # exact, binned, or none

    def as_fractions(self) -> dict[str, Optional[float]]:
        return {name: mv.value for name, mv in self.metrics.items()}


def _named(sample: SampleRecord, exc: Exception) -> EngineError:
    kind = type(exc) if isinstance(exc, EngineError) else ValidationError
    return kind(f"sample {sample.sample_id!r}: {exc}")


def _load_sample_pair(
    sample: SampleRecord, base_dir
) -> tuple[AnomalyMap, PixelMask]:
    try:
        amap = load_map(resolve_path(sample.map_path, base_dir))
    except EngineError as exc:
        raise _named(sample, exc) from exc
    if sample.is_good and not sample.mask_path:
        mask = PixelMask(np.zeros(amap.values.shape, dtype=np.uint8))
    else:
        if not sample.mask_path:
            raise ValidationError(
                f"sample {sample.sample_id!r}: bad test sample has no mask_path "
                "but the manifest advertises pixel labels"
            )
        try:
            mask = load_mask(resolve_path(sample.mask_path, base_dir))
        except EngineError as exc:
            raise _named(sample, exc) from exc
    if amap.values.shape != mask.values.shape:
        raise ValidationError(
            f"sample {sample.sample_id!r}: map shape {amap.values.shape} "
            f"!= mask shape {mask.values.shape}"
        )
    return amap, mask


def score_category(
    manifest: DatasetManifest,
    scores: dict[str, float],
    maps_root: str | Path | None = None,
    *,
    fpr_cap: float = DEFAULT_FPR_CAP,
    pg_budget: float = 0.02,
    pb_budget: float = 0.02,
    bins: int = DEFAULT_BINS,
    exact_limit: int = EXACT_PIXEL_LIMIT,
    connectivity: int = 8,
    interpolate_cap: bool = True,
    curve_out: str | Path | None = None,
) -> CategoryScores:
    """Compute every available metric for one category."""
    base_dir = maps_root
    if base_dir is None and manifest.source_path:
        base_dir = Path(manifest.source_path).parent

    violations = validate_manifest(manifest, base_dir, check_mask_content=False)
    if violations:
        detail = "; ".join(f"[{v.rule}] {v.message}" for v in violations)
        raise ValidationError(f"manifest invalid: {detail}")

    test = manifest.by_split("test")
    unknown = sorted(set(scores) - set(manifest.sample_ids()))
    if unknown:
        raise ValidationError(
            f"scores reference unknown sample ids: {', '.join(unknown[:5])}"
        )
    missing = sorted(s.sample_id for s in test if s.sample_id not in scores)
    if missing:
        raise ValidationError(
            f"missing scores for test samples: {', '.join(missing[:5])}"
        )

    ls = LabeledScores(
        np.array([scores[s.sample_id] for s in test], dtype=np.float64),
        np.array([not s.is_good for s in test], dtype=bool),
    )
    metrics = score_image_metrics(ls, pg_budget=pg_budget, pb_budget=pb_budget)

    pixel_mode = "none"
    if manifest.has_pixel_labels:
        with_maps = [s for s in test if s.map_path]
        if with_maps and len(with_maps) != len(test):
            lacking = next(s.sample_id for s in test if not s.map_path)
            raise ValidationError(
                f"sample {lacking!r}: no map_path while other test samples have "
                "maps; provide maps for all test samples or none"
            )
        if with_maps:
            pairs = [_load_sample_pair(s, base_dir) for s in test]
            pool = build_pool(pairs, connectivity=connectivity)
            metrics.update(
                score_pixel_metrics(
                    pool,
                    cap=fpr_cap,
                    exact_limit=exact_limit,
                    bins=bins,
                    interpolate_cap=interpolate_cap,
                )
            )
            pixel_mode = "exact" if pool.pixel_count <= exact_limit else "binned"
            if curve_out is not None:
                curve = pro_curve(pool, fpr_cap, exact_limit, bins)
                _write_curve(curve, curve_out)
    if pixel_mode == "none":
        from .image_metrics import unavailable

        for name in ("pix.AUROC", "pix.AUPRO", "pix.F1Max"):
            metrics[name] = unavailable(name)

    return CategoryScores(
        category=manifest.category,
        metrics=metrics,
        n_test_good=sum(1 for s in test if s.is_good),
        n_test_bad=sum(1 for s in test if not s.is_good),
        pixel_mode=pixel_mode,
    )


def _write_curve(curve, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["fpr,pro"]
    lines += [f"{f!r},{p!r}" for f, p in curve.rows()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
