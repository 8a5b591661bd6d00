import re
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from acceptance_criteria import CRITERIA

DATA_DIR = Path(__file__).parent / "data"

_ACCEPTANCE_RE = re.compile(r"test_acceptance\.py::test_(c\d\d)")


_OUTCOMES: dict = {}


def pytest_runtest_logreport(report):
    m = _ACCEPTANCE_RE.search(report.nodeid)
    if not m:
        return
    store = _OUTCOMES.setdefault(m.group(1), [])
    if report.when == "call":
        xfailed = hasattr(report, "wasxfail") and not report.passed
        ok = report.passed or xfailed
        store.append((report.nodeid, ok, xfailed))
    elif report.when == "setup" and report.failed:
        store.append((report.nodeid, False, False))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA):
        runs = _OUTCOMES.get(key)
        if not runs:
            terminalreporter.write_line(f"{key.upper()}  NOT RUN  {CRITERIA[key]}")
            continue
        ok = all(flag for _, flag, _ in runs)
        n_xfail = sum(1 for _, _, xf in runs if xf)
        verdict = "PASS" if ok else "FAIL"
        note = ""
        if n_xfail:
            plural = "s" if n_xfail > 1 else ""
            note = f" ({n_xfail} documented expected failure{plural})"
        terminalreporter.write_line(f"{key.upper()}  {verdict}  {CRITERIA[key]}{note}")


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def random_labeled_scores(rng, n_max=200, tie_prob=0.5):
    """Random score/label instance, both classes present, ties likely."""
    n = int(rng.integers(4, n_max + 1))
    n_bad = int(rng.integers(1, n))
    labels = np.zeros(n, dtype=bool)
    labels[:n_bad] = True
    rng.shuffle(labels)
    if rng.random() < tie_prob:
        # coarse grid forces score collisions across and within classes
        levels = int(rng.integers(2, max(3, n // 2)))
        scores = rng.integers(0, levels, size=n).astype(np.float64) / levels
    else:
        scores = rng.normal(size=n)
    return scores, labels


def random_mask(rng, h, w, max_rects=3):
    """0 to max_rects random rectangles; may be empty or overlapping."""
    mask = np.zeros((h, w), dtype=np.uint8)
    for _ in range(int(rng.integers(0, max_rects + 1))):
        y0 = int(rng.integers(0, h - 1))
        x0 = int(rng.integers(0, w - 1))
        y1 = int(rng.integers(y0 + 1, min(h, y0 + h // 2) + 1))
        x1 = int(rng.integers(x0 + 1, min(w, x0 + w // 2) + 1))
        mask[y0:y1, x0:x1] = 1
    return mask


def random_pool_arrays(rng, n_images=None, size=32, quantize=None):
    """Random (maps, masks) lists with at least one anomalous pixel."""
    n = int(rng.integers(1, 6)) if n_images is None else n_images
    maps, masks = [], []
    for _ in range(n):
        m = rng.random((size, size)).astype(np.float32)
        if quantize:
            m = (np.floor(m * quantize) / quantize).astype(np.float32)
        maps.append(m)
        masks.append(random_mask(rng, size, size))
    if not any(k.any() for k in masks):
        masks[0][size // 2, size // 2] = 1
    return maps, masks


def build_category(root, rng, n_good=4, n_bad=4, size=16, with_maps=True):
    """Write a complete scored category (manifest, maps, masks, scores CSV).

    Image scores separate the classes cleanly; maps are random with the mask
    region boosted so pixel metrics are nondegenerate. Map files alternate
    between the raw format and 16-bit PNG to exercise both loaders.
    """
    import json

    from adeval.maps import write_map_png16, write_map_raw, write_mask_png, write_scores_csv

    root = Path(root)
    samples = [
        {
            "sample_id": "train_g000",
            "split": "train",
            "label": "good",
            "image_path": "images/train_g000.png",
            "resolution": size,
        }
    ]
    scores = {}
    for i in range(n_good):
        sid = f"g{i:03d}"
        entry = {
            "sample_id": sid,
            "split": "test",
            "label": "good",
            "image_path": f"images/{sid}.png",
            "resolution": size,
        }
        scores[sid] = float(0.1 + 0.3 * rng.random())
        if with_maps:
            amap = (0.3 * rng.random((size, size))).astype(np.float32)
            entry["map_path"] = f"maps/{sid}.adm"
            write_map_raw(amap, root / entry["map_path"])
        samples.append(entry)
    for i in range(n_bad):
        sid = f"b{i:03d}"
        entry = {
            "sample_id": sid,
            "split": "test",
            "label": "bad",
            "image_path": f"images/{sid}.png",
            "resolution": size,
        }
        scores[sid] = float(0.6 + 0.3 * rng.random())
        mask = np.zeros((size, size), dtype=np.uint8)
        y, x = int(rng.integers(0, size - 4)), int(rng.integers(0, size - 4))
        mask[y : y + 4, x : x + 4] = 1
        entry["mask_path"] = f"masks/{sid}.png"
        write_mask_png(mask, root / entry["mask_path"])
        if with_maps:
            amap = (0.3 * rng.random((size, size))).astype(np.float32)
            amap[mask > 0] += 0.5
            if i % 2 == 0:
                entry["map_path"] = f"maps/{sid}.adm"
                write_map_raw(amap, root / entry["map_path"])
            else:
                entry["map_path"] = f"maps/{sid}.png"
                write_map_png16(amap, root / entry["map_path"])
        samples.append(entry)
    manifest_path = root / "manifest.json"
    manifest_path.write_text(
        json.dumps(
            {
                "category": "toycat",
                "has_pixel_labels": n_bad > 0,
                "samples": samples,
            },
            indent=2,
        )
    )
    scores_path = root / "scores.csv"
    write_scores_csv(scores, scores_path)
    return {"manifest": manifest_path, "scores": scores_path, "score_values": scores}
