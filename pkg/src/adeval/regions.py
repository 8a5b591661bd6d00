"""Connected anomalous regions, the per-region unit behind the PRO curve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .maps import PixelMask

_STRUCTURE_8 = np.ones((3, 3), dtype=bool)
_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class RegionSet:
    """Labeled connected components of a binary mask.

    Labels run 1..region_count in row-major first-pixel order; 0 is background.
    """

    region_count: int
    region_labels: np.ndarray
    region_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        self.region_labels.setflags(write=False)


def label_regions(mask: PixelMask, connectivity: int = 8) -> RegionSet:
    """Split a mask into connected components (8-connectivity by default).

    Labeling order is deterministic: regions are numbered by the row-major
    position of their first pixel, independent of the labeling backend.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _STRUCTURE_8 if connectivity == 8 else _STRUCTURE_4
    labeled, count = ndimage.label(mask.values, structure=structure)
    if count == 0:
        return RegionSet(0, labeled.astype(np.int32), ())

    flat = labeled.ravel()
    first_seen = np.full(count + 1, flat.size, dtype=np.int64)
    np.minimum.at(first_seen, flat, np.arange(flat.size, dtype=np.int64))
    order = np.argsort(first_seen[1:], kind="stable")  # old label k+1 -> rank
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, count + 1, dtype=np.int32)
    relabeled = remap[labeled]

    sizes = np.bincount(relabeled.ravel(), minlength=count + 1)[1:]
    return RegionSet(int(count), relabeled, tuple(int(s) for s in sizes))
