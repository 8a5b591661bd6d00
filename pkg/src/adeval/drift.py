"""Seeded synthetic data-drift pipeline with mask-consistent geometry.

A perturbation is described by a DriftPlan sampled purely from
(seed, sample_id): one or two transform categories chosen without
replacement, one transform per category, every scalar parameter recorded in
the plan. Applying a plan is then a deterministic function of (image, plan),
so the perturbed corpus is reproducible byte for byte.

Categories apply in a fixed order: motion/quality, lighting, camera position.
Geometric transforms (rotation, crop, perspective) move the ground-truth mask
with nearest-neighbor resampling; photometric ones never touch it.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .errors import InputError, ValidationError
from .maps import PixelMask
from .parallel import worker_count
from .seeding import Seed, substream

CATEGORY_ORDER = ("motion_quality", "lighting", "camera_position")
TRANSFORMS = {
    "motion_quality": ("gaussian_blur", "gaussian_noise"),
    "lighting": ("color_jitter", "random_shadow"),
    "camera_position": ("rotate", "crop_resize", "perspective"),
}

BLUR_KERNEL = 7
BLUR_SIGMA_RANGE = (0.1, 1.5)
NOISE_MEAN = 0.5
NOISE_STD = 1.0
NOISE_SCALE_RANGE = (0.01, 0.05)
JITTER_RANGE = (0.5, 1.5)
SHADOW_LAYERS = 3
SHADOW_FACTOR = 0.0
ROTATION_RANGE = (-5.0, 5.0)
CROP_SCALE_RANGE = (0.8, 1.0)
PERSPECTIVE_DISTORTION = 0.2

# luma weights used for the grayscale blends in color_jitter (ITU-R 601)
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB image; transforms work on a normalized [0,1] copy."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValidationError(f"rgb image must be HxWx3, got shape {p.shape}")
        if p.dtype != np.uint8:
            raise ValidationError(f"rgb image must be uint8, got {p.dtype}")
        p.setflags(write=False)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class TransformSpec:
    category: str
    name: str
    params: dict


@dataclass(frozen=True)
class DriftPlan:
    """Fully sampled perturbation for one image, in application order."""

    sample_id: str
    transforms: tuple[TransformSpec, ...]

    def category_names(self) -> tuple[str, ...]:
        return tuple(t.category for t in self.transforms)


def plan_to_dict(plan: DriftPlan) -> dict:
    return {
        "sample_id": plan.sample_id,
        "transforms": [
            {"category": t.category, "name": t.name, "params": t.params}
            for t in plan.transforms
        ],
    }


def plan_from_dict(doc: dict) -> DriftPlan:
    try:
        transforms = tuple(
            TransformSpec(str(t["category"]), str(t["name"]), dict(t["params"]))
            for t in doc["transforms"]
        )
        return DriftPlan(sample_id=str(doc["sample_id"]), transforms=transforms)
    except KeyError as exc:
        raise InputError(f"drift plan missing field {exc}") from exc


def _uniform(rng: np.random.Generator, lo_hi: tuple[float, float]) -> float:
    return float(rng.uniform(lo_hi[0], lo_hi[1]))


def _convex_unit_quad(rng: np.random.Generator) -> list[list[float]]:
    """Four uniform points in the unit square, retried until convex."""
    while True:
        pts = rng.uniform(0.0, 1.0, size=(4, 2))
        center = pts.mean(axis=0)
        angles = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
        ordered = pts[np.argsort(angles)]
        cross = []
        for i in range(4):
            a = ordered[i]
            b = ordered[(i + 1) % 4]
            c = ordered[(i + 2) % 4]
            u, v = b - a, c - b
            cross.append(u[0] * v[1] - u[1] * v[0])
        cross = np.asarray(cross)
        if (cross > 1e-9).all() or (cross < -1e-9).all():
            return [[float(x), float(y)] for x, y in ordered]


def _sample_params(name: str, rng: np.random.Generator) -> dict:
    if name == "gaussian_blur":
        return {"kernel": BLUR_KERNEL, "sigma": _uniform(rng, BLUR_SIGMA_RANGE)}
    if name == "gaussian_noise":
        return {
            "mean": NOISE_MEAN,
            "std": NOISE_STD,
            "scale": _uniform(rng, NOISE_SCALE_RANGE),
            "rng_key": int(rng.integers(0, 2**64, dtype=np.uint64)),
        }
    if name == "color_jitter":
        return {
            "brightness": _uniform(rng, JITTER_RANGE),
            "contrast": _uniform(rng, JITTER_RANGE),
            "saturation": _uniform(rng, JITTER_RANGE),
        }
    if name == "random_shadow":
        return {
            "factor": SHADOW_FACTOR,
            "layers": [_convex_unit_quad(rng) for _ in range(SHADOW_LAYERS)],
        }
    if name == "rotate":
        return {"angle": _uniform(rng, ROTATION_RANGE)}
    if name == "crop_resize":
        return {
            "area_scale": _uniform(rng, CROP_SCALE_RANGE),
            "cx": float(rng.uniform()),
            "cy": float(rng.uniform()),
        }
    if name == "perspective":
        return {
            "distortion": PERSPECTIVE_DISTORTION,
            "shifts": [float(x) for x in rng.uniform(size=8)],
        }
    raise ValidationError(f"unknown transform {name!r}")


def sample_plan(seed: Seed | int, sample_id: str) -> DriftPlan:
    """Draw a perturbation plan; pure function of (seed, sample_id)."""
    rng = substream(seed, sample_id, "drift.plan")
    count = int(rng.integers(1, 3))
    chosen = sorted(rng.choice(len(CATEGORY_ORDER), size=count, replace=False))
    transforms = []
    for idx in chosen:
        category = CATEGORY_ORDER[idx]
        options = TRANSFORMS[category]
        name = options[int(rng.integers(len(options)))]
        transforms.append(TransformSpec(category, name, _sample_params(name, rng)))
    return DriftPlan(sample_id=sample_id, transforms=tuple(transforms))


def _to_float(img: RgbImage) -> np.ndarray:
    return img.pixels.astype(np.float32) / 255.0


def _to_rgb(arr: np.ndarray) -> RgbImage:
    return RgbImage(np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8))


def _clamp(arr: np.ndarray) -> np.ndarray:
    return np.clip(arr, 0.0, 1.0, out=arr)


def gaussian_blur(arr: np.ndarray, sigma: float, kernel: int = BLUR_KERNEL) -> np.ndarray:
    out = cv2.GaussianBlur(arr, (kernel, kernel), sigmaX=sigma, sigmaY=sigma)
    return _clamp(out)


def gaussian_noise(
    arr: np.ndarray,
    scale: float,
    rng_key: int,
    mean: float = NOISE_MEAN,
    std: float = NOISE_STD,
) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(rng_key))
    noise = rng.normal(mean, std, size=arr.shape).astype(np.float32)
    return _clamp(arr + scale * noise)


def color_jitter(arr: np.ndarray, brightness: float, contrast: float, saturation: float) -> np.ndarray:
    out = arr * brightness
    _clamp(out)
    gray = out @ _LUMA
    out = contrast * out + (1.0 - contrast) * float(gray.mean())
    _clamp(out)
    gray = (out @ _LUMA)[..., None]
    out = saturation * out + (1.0 - saturation) * gray
    return _clamp(out)


def random_shadow(
    arr: np.ndarray, layers: list[list[list[float]]], factor: float = SHADOW_FACTOR
) -> np.ndarray:
    h, w = arr.shape[:2]
    out = arr.copy()
    for quad in layers:
        pts = np.array(
            [[x * (w - 1), y * (h - 1)] for x, y in quad], dtype=np.float64
        )
        poly = np.rint(pts).astype(np.int32)
        region = np.zeros((h, w), dtype=np.uint8)
        cv2.fillPoly(region, [poly], 1)
        out[region.astype(bool)] *= factor
    return _clamp(out)


def _warp_pair(
    arr: np.ndarray,
    mask: Optional[np.ndarray],
    warp,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    out = warp(arr, cv2.INTER_LINEAR)
    out_mask = None
    if mask is not None:
        out_mask = warp(mask, cv2.INTER_NEAREST)
    return _clamp(out), out_mask


def rotate(
    arr: np.ndarray, mask: Optional[np.ndarray], angle: float
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    h, w = arr.shape[:2]
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    m = cv2.getRotationMatrix2D(center, angle, 1.0)

    def warp(a, interp):
        return cv2.warpAffine(
            a, m, (w, h), flags=interp,
            borderMode=cv2.BORDER_CONSTANT, borderValue=0,
        )

    return _warp_pair(arr, mask, warp)


def crop_resize(
    arr: np.ndarray,
    mask: Optional[np.ndarray],
    area_scale: float,
    cx: float,
    cy: float,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Crop a centered-scale window at (cx, cy) and resize back to full size."""
    h, w = arr.shape[:2]
    side = math.sqrt(area_scale)
    ch = max(1, min(h, round(h * side)))
    cw = max(1, min(w, round(w * side)))
    y0 = round(cy * (h - ch))
    x0 = round(cx * (w - cw))

    def warp(a, interp):
        window = a[y0 : y0 + ch, x0 : x0 + cw]
        return cv2.resize(window, (w, h), interpolation=interp)

    return _warp_pair(arr, mask, warp)


def perspective(
    arr: np.ndarray,
    mask: Optional[np.ndarray],
    shifts: list[float],
    distortion: float = PERSPECTIVE_DISTORTION,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Displace each corner inward by up to distortion * half the dimension."""
    h, w = arr.shape[:2]
    dx = [s * distortion * (w / 2.0) for s in shifts[0::2]]
    dy = [s * distortion * (h / 2.0) for s in shifts[1::2]]
    src = np.array(
        [[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float32
    )
    dst = np.array(
        [
            [dx[0], dy[0]],
            [w - 1 - dx[1], dy[1]],
            [w - 1 - dx[2], h - 1 - dy[2]],
            [dx[3], h - 1 - dy[3]],
        ],
        dtype=np.float32,
    )
    m = cv2.getPerspectiveTransform(src, dst)

    def warp(a, interp):
        return cv2.warpPerspective(
            a, m, (w, h), flags=interp,
            borderMode=cv2.BORDER_CONSTANT, borderValue=0,
        )

    return _warp_pair(arr, mask, warp)


def apply_plan(
    image: RgbImage, mask: Optional[PixelMask], plan: DriftPlan
) -> tuple[RgbImage, Optional[PixelMask]]:
    """Run a plan's transforms in category order; pure given the plan."""
    if mask is not None and mask.values.shape != image.pixels.shape[:2]:
        raise ValidationError(
            f"mask shape {mask.values.shape} != image shape {image.pixels.shape[:2]}"
        )
    arr = _to_float(image)
    m = mask.values.copy() if mask is not None else None
    for t in plan.transforms:
        p = t.params
        if t.name == "gaussian_blur":
            arr = gaussian_blur(arr, p["sigma"], p.get("kernel", BLUR_KERNEL))
        elif t.name == "gaussian_noise":
            arr = gaussian_noise(arr, p["scale"], p["rng_key"], p["mean"], p["std"])
        elif t.name == "color_jitter":
            arr = color_jitter(arr, p["brightness"], p["contrast"], p["saturation"])
        elif t.name == "random_shadow":
            arr = random_shadow(arr, p["layers"], p["factor"])
        elif t.name == "rotate":
            arr, m = rotate(arr, m, p["angle"])
        elif t.name == "crop_resize":
            arr, m = crop_resize(arr, m, p["area_scale"], p["cx"], p["cy"])
        elif t.name == "perspective":
            arr, m = perspective(arr, m, p["shifts"], p["distortion"])
        else:
            raise ValidationError(f"unknown transform {t.name!r}")
    out_mask = None
    if mask is not None:
        out_mask = PixelMask((m > 0).astype(np.uint8))
    return _to_rgb(arr), out_mask


def perturb_sample(
    seed: Seed | int,
    sample_id: str,
    image: RgbImage,
    mask: Optional[PixelMask] = None,
) -> tuple[RgbImage, Optional[PixelMask], DriftPlan]:
    plan = sample_plan(seed, sample_id)
    out, out_mask = apply_plan(image, mask, plan)
    return out, out_mask, plan


IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
MASKS_DIRNAME = "masks"
PLAN_LOG_NAME = "drift_plans.json"


def _corpus_images(root: Path) -> list[Path]:
    out = []
    for p in sorted(root.rglob("*")):
        if p.suffix.lower() not in IMAGE_SUFFIXES or not p.is_file():
            continue
        if MASKS_DIRNAME in p.relative_to(root).parts:
            continue
        out.append(p)
    return out


def _load_rgb(path: Path) -> RgbImage:
    from PIL import Image

    try:
        with Image.open(path) as im:
            return RgbImage(np.asarray(im.convert("RGB"), dtype=np.uint8))
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc


def _save_rgb(image: RgbImage, path: Path) -> None:
    from PIL import Image

    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image.pixels, mode="RGB").save(path, format="PNG")


def perturb_corpus(
    in_dir: str | Path, out_dir: str | Path, seed: Seed | int
) -> dict:
    """Perturb every image under in_dir, mirroring its layout under out_dir.

    A mask for image <rel> is looked up at <in_dir>/masks/<rel> (PNG) and,
    when present, transported through the same plan. Outputs are always PNG.
    Returns the plan log that was also written to <out_dir>/drift_plans.json.
    """
    in_dir = Path(in_dir)
    out_dir = Path(out_dir)
    if not in_dir.is_dir():
        raise InputError(f"corpus directory {in_dir} does not exist")
    images = _corpus_images(in_dir)
    if not images:
        raise InputError(f"no images found under {in_dir}")
    seed_value = seed.value if isinstance(seed, Seed) else int(seed)

    def run(path: Path) -> tuple[str, DriftPlan]:
        rel = path.relative_to(in_dir)
        sample_id = rel.as_posix()
        image = _load_rgb(path)
        mask_path = in_dir / MASKS_DIRNAME / rel.with_suffix(".png")
        mask = None
        if mask_path.exists():
            from .maps import load_mask

            mask = load_mask(mask_path)
        out, out_mask, plan = perturb_sample(seed_value, sample_id, image, mask)
        _save_rgb(out, out_dir / rel.with_suffix(".png"))
        if out_mask is not None:
            from .maps import write_mask_png

            write_mask_png(
                out_mask.values, out_dir / MASKS_DIRNAME / rel.with_suffix(".png")
            )
        return sample_id, plan

    workers = worker_count(len(images))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, images))
    else:
        results = [run(p) for p in images]

    log = {
        "seed": seed_value,
        "plans": {sid: plan_to_dict(plan) for sid, plan in results},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / PLAN_LOG_NAME).write_text(
        json.dumps(log, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return log
