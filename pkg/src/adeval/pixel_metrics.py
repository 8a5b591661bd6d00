"""Pixel-level metrics pooled across a category's test set.

Three metrics share one kernel. Sorting the pooled scores once (descending)
and taking cumulative sums yields, at every unique threshold:

  tp(t), fp(t)            -> pixel AUROC and pixel F1-Max
  sum of region weights   -> PRO(t), since mean per-region recall is the
                             weighted count of anomalous pixels >= t with
                             weight 1/(R * |region|)

Above a configurable pooled-pixel limit the scores are histogrammed into
uniform bins instead, with per-image tallies computed in parallel and merged.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .image_metrics import MetricValue, unavailable
from .maps import AnomalyMap, PixelMask
from .parallel import worker_count
from .regions import RegionSet, label_regions

EXACT_PIXEL_LIMIT = 2**26
DEFAULT_BINS = 100_000
DEFAULT_FPR_CAP = 0.3


@dataclass(frozen=True)
class PoolSample:
    map: AnomalyMap
    mask: PixelMask
    regions: RegionSet


@dataclass(frozen=True)
class PixelPool:
    """Immutable view of all test maps and masks of one category."""

    samples: tuple[PoolSample, ...]
    has_labels: bool

    @property
    def anomalous_pixels(self) -> int:
        return sum(int(s.mask.values.sum()) for s in self.samples)

    @property
    def normal_pixels(self) -> int:
        return sum(s.mask.values.size - int(s.mask.values.sum()) for s in self.samples)

    @property
    def region_count(self) -> int:
        return sum(s.regions.region_count for s in self.samples)

    @property
    def pixel_count(self) -> int:
        return sum(s.map.values.size for s in self.samples)


def build_pool(
    pairs: Iterable[tuple[AnomalyMap, Optional[PixelMask]]],
    connectivity: int = 8,
) -> PixelPool:
    """Pool maps with their masks; any missing mask marks labels unavailable."""
    samples = []
    has_labels = True
    for amap, mask in pairs:
        if mask is None:
            has_labels = False
            continue
        if amap.values.shape != mask.values.shape:
            raise ValidationError(
                f"map shape {amap.values.shape} != mask shape {mask.values.shape}"
            )
        samples.append(PoolSample(amap, mask, label_regions(mask, connectivity)))
    if not samples:
        has_labels = False
    return PixelPool(samples=tuple(samples), has_labels=has_labels)


@dataclass(frozen=True)
class ProCurve:
    """Operating points of mean per-region recall against pooled pixel FPR."""

    fpr: np.ndarray
    pro: np.ndarray
    cap: float

    def rows(self) -> list[tuple[float, float]]:
        return [(float(f), float(p)) for f, p in zip(self.fpr, self.pro)]


def _region_weights(sample: PoolSample, total_regions: int) -> np.ndarray:
    """Per-pixel weight so that a global weighted count >= t equals PRO(t)."""
    labels = sample.regions.region_labels
    sizes = np.asarray(sample.regions.region_sizes, dtype=np.float64)
    # index 0 = background; 1/inf gives weight 0 there
    lookup = 1.0 / np.concatenate([[np.inf], total_regions * sizes])
    return lookup[labels].ravel()


@dataclass(frozen=True)
class _Curves:
    """Cumulative counts at descending thresholds; index 0 = highest."""

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    pro: np.ndarray
    anomalous: int
    normal: int


def _exact_curves(pool: PixelPool) -> _Curves:
    total_regions = pool.region_count
    scores = np.concatenate([s.map.values.ravel() for s in pool.samples])
    flags = np.concatenate(
        [s.mask.values.ravel().astype(bool) for s in pool.samples]
    )
    weights = np.concatenate(
        [_region_weights(s, total_regions) for s in pool.samples]
    )
    order = np.argsort(scores, kind="stable")[::-1]
    s = scores[order]
    # last index of each tie group in descending order
    group_end = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp = np.cumsum(flags[order])[group_end]
    w_cum = np.cumsum(weights[order])
    # the weights sum to 1 by construction; dividing by the accumulated float
    # total keeps full recall at exactly 1.0 instead of 1 - O(eps)
    pro = w_cum[group_end] / w_cum[-1] if w_cum[-1] > 0.0 else w_cum[group_end]
    total = group_end + 1
    return _Curves(
        thresholds=s[group_end].astype(np.float64),
        tp=tp.astype(np.int64),
        fp=(total - tp).astype(np.int64),
        pro=np.minimum(pro, 1.0),
        anomalous=int(flags.sum()),
        normal=int(flags.size - flags.sum()),
    )


def _binned_tally(
    sample: PoolSample, edges: np.ndarray, total_regions: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    bins = edges.size - 1
    scores = sample.map.values.ravel()
    idx = np.clip(np.searchsorted(edges, scores, side="right") - 1, 0, bins - 1)
    flags = sample.mask.values.ravel().astype(bool)
    bad = np.bincount(idx[flags], minlength=bins)
    total = np.bincount(idx, minlength=bins)
    weighted = np.bincount(
        idx, weights=_region_weights(sample, total_regions), minlength=bins
    )
    return bad, total, weighted


def _binned_curves(pool: PixelPool, bins: int) -> _Curves:
    total_regions = pool.region_count
    lo = min(float(s.map.values.min()) for s in pool.samples)
    hi = max(float(s.map.values.max()) for s in pool.samples)
    if lo == hi:
        return _exact_curves(pool)  # single unique value, exact is O(n)
    edges = np.linspace(lo, hi, bins + 1)
    workers = worker_count(len(pool.samples))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            tallies = list(
                pool_exec.map(
                    lambda smp: _binned_tally(smp, edges, total_regions),
                    pool.samples,
                )
            )
    else:
        tallies = [_binned_tally(smp, edges, total_regions) for smp in pool.samples]
    bad = np.sum([t[0] for t in tallies], axis=0)
    total = np.sum([t[1] for t in tallies], axis=0)
    weighted = np.sum([t[2] for t in tallies], axis=0)
    # accumulate from the top bin down; the threshold of a point is the lower
    # edge of the last bin folded in
    tp = np.cumsum(bad[::-1])
    tot = np.cumsum(total[::-1])
    w_cum = np.cumsum(weighted[::-1])
    pro = w_cum / w_cum[-1] if w_cum[-1] > 0.0 else w_cum
    anomalous = int(bad.sum())
    return _Curves(
        thresholds=edges[bins - 1 :: -1].astype(np.float64),
        tp=tp.astype(np.int64),
        fp=(tot - tp).astype(np.int64),
        pro=np.minimum(pro, 1.0),
        anomalous=anomalous,
        normal=int(total.sum()) - anomalous,
    )


def _curves(pool: PixelPool, exact_limit: int, bins: int) -> _Curves:
    if pool.pixel_count <= exact_limit:
        return _exact_curves(pool)
    return _binned_curves(pool, bins)


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) * 0.5))


def _area_to_cap(
    fpr: np.ndarray, y: np.ndarray, cap: float, interpolate_cap: bool
) -> float:
    """Trapezoid area of y over fpr on [0, cap], normalized by cap."""
    if fpr[0] != 0.0:
        fpr = np.concatenate([[0.0], fpr])
        y = np.concatenate([[0.0], y])
    j = int(np.searchsorted(fpr, cap, side="right"))
    xs, ys = fpr[:j], y[:j]
    if j < fpr.size and interpolate_cap and (xs.size == 0 or xs[-1] < cap):
        f0, f1 = fpr[j - 1], fpr[j]
        p0, p1 = y[j - 1], y[j]
        pc = p0 + (p1 - p0) * (cap - f0) / (f1 - f0)
        xs = np.concatenate([xs, [cap]])
        ys = np.concatenate([ys, [pc]])
    if xs.size < 2:
        return 0.0
    return _trapezoid(xs, ys) / cap


def _check_pool(pool: PixelPool, need_normal: bool, need_anomalous: bool) -> bool:
    if not pool.has_labels:
        return False
    if need_anomalous and pool.anomalous_pixels == 0:
        return False
    if need_normal and pool.normal_pixels == 0:
        return False
    return True


def auroc_pixel(
    pool: PixelPool,
    exact_limit: int = EXACT_PIXEL_LIMIT,
    bins: int = DEFAULT_BINS,
) -> MetricValue:
    """AUROC over all pixels of all test images pooled into one score set."""
    if not _check_pool(pool, need_normal=True, need_anomalous=True):
        return unavailable("pix.AUROC")
    c = _curves(pool, exact_limit, bins)
    tpr = np.concatenate([[0.0], c.tp / c.anomalous])
    fpr = np.concatenate([[0.0], c.fp / c.normal])
    return MetricValue("pix.AUROC", _trapezoid(fpr, tpr))


def f1max_pixel(
    pool: PixelPool,
    exact_limit: int = EXACT_PIXEL_LIMIT,
    bins: int = DEFAULT_BINS,
) -> MetricValue:
    """Maximum pooled-pixel F1 over thresholds; ties go to the highest."""
    if not pool.has_labels or pool.anomalous_pixels == 0:
        return unavailable("pix.F1Max")
    c = _curves(pool, exact_limit, bins)
    denom = 2.0 * c.tp + c.fp + (c.anomalous - c.tp)
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(c.tp > 0, 2.0 * c.tp / denom, 0.0)
    best = int(np.argmax(f1))
    return MetricValue(
        "pix.F1Max", float(f1[best]), threshold=float(c.thresholds[best])
    )


def pro_curve(
    pool: PixelPool,
    cap: float = DEFAULT_FPR_CAP,
    exact_limit: int = EXACT_PIXEL_LIMIT,
    bins: int = DEFAULT_BINS,
) -> ProCurve:
    if not (0.0 < cap <= 1.0):
        raise ValidationError(f"fpr cap must lie in (0, 1], got {cap}")
    c = _curves(pool, exact_limit, bins)
    fpr = np.concatenate([[0.0], c.fp / c.normal])
    pro = np.concatenate([[0.0], c.pro])
    return ProCurve(fpr=fpr, pro=pro, cap=cap)


def aupro(
    pool: PixelPool,
    cap: float = DEFAULT_FPR_CAP,
    exact_limit: int = EXACT_PIXEL_LIMIT,
    bins: int = DEFAULT_BINS,
    interpolate_cap: bool = True,
) -> MetricValue:
    """Area under mean per-region recall vs pooled FPR, on [0, cap] / cap."""
    if not (0.0 < cap <= 1.0):
        raise ValidationError(f"fpr cap must lie in (0, 1], got {cap}")
    if not _check_pool(pool, need_normal=True, need_anomalous=True):
        return unavailable("pix.AUPRO")
    if pool.region_count == 0:
        return unavailable("pix.AUPRO")
    c = _curves(pool, exact_limit, bins)
    fpr = c.fp / c.normal
    return MetricValue(
        "pix.AUPRO", _area_to_cap(fpr, c.pro, cap, interpolate_cap)
    )


def score_pixel_metrics(
    pool: PixelPool,
    cap: float = DEFAULT_FPR_CAP,
    exact_limit: int = EXACT_PIXEL_LIMIT,
    bins: int = DEFAULT_BINS,
    interpolate_cap: bool = True,
) -> dict[str, MetricValue]:
    """All three pixel metrics from a single sort of the pooled scores."""
    if not (0.0 < cap <= 1.0):
        raise ValidationError(f"fpr cap must lie in (0, 1], got {cap}")
    ranked = _check_pool(pool, need_normal=True, need_anomalous=True)
    f1_ok = pool.has_labels and pool.anomalous_pixels > 0
    out = {
        "pix.AUROC": unavailable("pix.AUROC"),
        "pix.AUPRO": unavailable("pix.AUPRO"),
        "pix.F1Max": unavailable("pix.F1Max"),
    }
    if not (ranked or f1_ok):
        return out
    c = _curves(pool, exact_limit, bins)
    if f1_ok:
        with np.errstate(invalid="ignore", divide="ignore"):
            f1 = np.where(
                c.tp > 0,
                2.0 * c.tp / (2.0 * c.tp + c.fp + (c.anomalous - c.tp)),
                0.0,
            )
        best = int(np.argmax(f1))
        out["pix.F1Max"] = MetricValue(
            "pix.F1Max", float(f1[best]), threshold=float(c.thresholds[best])
        )
    if ranked:
        tpr = np.concatenate([[0.0], c.tp / c.anomalous])
        fpr = np.concatenate([[0.0], c.fp / c.normal])
        out["pix.AUROC"] = MetricValue("pix.AUROC", _trapezoid(fpr, tpr))
        out["pix.AUPRO"] = MetricValue(
            "pix.AUPRO", _area_to_cap(fpr[1:], c.pro, cap, interpolate_cap)
        )
    return out


def masks_from_arrays(
    maps: Sequence[np.ndarray], masks: Sequence[Optional[np.ndarray]]
) -> PixelPool:
    """Convenience pool builder from raw arrays; used heavily in tests."""
    pairs = []
    for m, k in zip(maps, masks):
        amap = AnomalyMap(np.asarray(m, dtype=np.float32))
        pmask = PixelMask(np.asarray(k, dtype=np.uint8)) if k is not None else None
        pairs.append((amap, pmask))
    return build_pool(pairs)
