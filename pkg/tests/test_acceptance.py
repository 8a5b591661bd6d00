"""End-to-end acceptance gate, one test prefix per shipped guarantee.

Every test_cNN function backs the matching line of the summary that conftest
prints after the run. Reference numbers for the reporting checks come from
tests/data/published_results.json plus the frozen row constants below; all
metric checks run against the independent reference implementations in
oracles.py.
"""

import json
import math
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from adeval import drift, protocols
from adeval.image_metrics import LabeledScores, auroc, f1max, pb_at, pg_at, score_image_metrics
from adeval.maps import write_mask_png
from adeval.pixel_metrics import aupro, masks_from_arrays, score_pixel_metrics
from adeval.records import DatasetManifest, SampleRecord
from adeval.report import (
    TableSpec,
    aggregate_dataset,
    aggregate_datasets,
    format_percent,
    load_results,
    render_table,
)
from conftest import DATA_DIR, random_labeled_scores, random_mask, random_pool_arrays
from oracles import (
    aupro_brute,
    auroc_pairwise,
    f1max_scan,
    partial_pixel_auroc,
    pb_scan,
    pg_scan,
    scan_thresholds,
)

# --------------------------------------------------------------------------
# frozen reference rows from the published evaluation
# --------------------------------------------------------------------------

# per-dataset cells of the main results table, "im.AUROC/im.PG2" on the image
# side and "pix.AUPRO/pix.F1Max" on the pixel side; the VAD dataset ships no
# pixel labels, hence the dash cells
IMAGE_CELLS = {
    ("PatchCore", "RIADs"): "91.4/39.0",
    ("PatchCore", "BTAD"): "95.5/67.3",
    ("PatchCore", "VAD"): "88.0/16.5",
    ("RD", "RIADs"): "93.2/46.3",
    ("RD", "BTAD"): "94.3/67.7",
    ("RD", "VAD"): "84.7/20.1",
    ("GLASS", "RIADs"): "88.8/30.7",
    ("GLASS", "BTAD"): "90.9/45.5",
    ("GLASS", "VAD"): "79.2/10.3",
}
PIXEL_CELLS = {
    ("PatchCore", "RIADs"): "92.0/33.3",
    ("PatchCore", "BTAD"): "76.9/55.1",
    ("PatchCore", "VAD"): "—/—",
    ("RD", "RIADs"): "95.0/41.1",
    ("RD", "BTAD"): "79.5/58.5",
    ("RD", "VAD"): "—/—",
    ("GLASS", "RIADs"): "67.1/38.8",
    ("GLASS", "BTAD"): "61.1/49.6",
    ("GLASS", "VAD"): "—/—",
}

# published per-dataset rows at input sizes 128 and 512, as
# (im.AUROC, pix.F1Max, im.PG2) percent triples; pix is None where the
# dataset has no pixel labels (printed as 0.0 in the source)
SIZE_ROWS = {
    ("PatchCore", 128): {
        "RIADs": (83.4, 18.9, 15.9),
        "BTech": (93.1, 41.7, 50.9),
        "VAD": (79.4, None, 11.8),
    },
    ("PatchCore", 512): {
        "RIADs": (94.4, 46.7, 56.6),
        "BTech": (95.9, 64.7, 75.5),
        "VAD": (88.7, None, 21.0),
    },
    ("GLASS", 128): {
        "RIADs": (82.9, 26.9, 18.3),
        "BTech": (74.5, 29.6, 32.1),
        "VAD": (74.8, None, 11.4),
    },
    ("GLASS", 512): {
        "RIADs": (92.1, 55.1, 36.2),
        "BTech": (95.2, 51.0, 62.1),
        "VAD": (80.3, None, 12.8),
    },
}

# the "D" (all datasets combined) summary rows printed next to them
SUMMARY_ROWS = {
    ("PatchCore", 128): (88.3, 30.3, 33.4),
    ("PatchCore", 512): (94.1, 57.3, 60.0),
    ("GLASS", 128): (77.4, 28.3, 20.6),
    ("GLASS", 512): (89.2, 53.0, 37.1),
}

# combined rows at size 256 recompute from the main table's per-dataset cells
D256_SUMMARY = {"PatchCore": "91.6/44.2/40.9", "GLASS": "86.3/44.2/28.8"}

SIZE_METRICS = ("im.AUROC", "pix.F1Max", "im.PG2")


# --------------------------------------------------------------------------
# c01 image AUROC vs pairwise brute force
# --------------------------------------------------------------------------


def test_c01_auroc_matches_pairwise_brute_force(rng):
    engine_time = 0.0
    for _ in range(1000):
        scores, labels = random_labeled_scores(rng)
        ls = LabeledScores(scores, labels)
        t0 = time.perf_counter()
        got = auroc(ls).value
        engine_time += time.perf_counter() - t0
        assert got == pytest.approx(auroc_pairwise(scores, labels), abs=1e-9)
    assert engine_time < 5.0


# --------------------------------------------------------------------------
# c02 threshold metrics vs exhaustive scan
# --------------------------------------------------------------------------


def test_c02_operating_points_match_exhaustive_scan(rng):
    for _ in range(1000):
        scores, labels = random_labeled_scores(rng)
        ls = LabeledScores(scores, labels)
        rows = scan_thresholds(scores, labels)

        got = f1max(ls)
        value, threshold = f1max_scan(scores, labels, rows=rows)
        assert got.value == value and got.threshold == threshold

        got = pg_at(ls)
        value, threshold = pg_scan(scores, labels, rows=rows)
        assert got.value == value and got.threshold == threshold

        got = pb_at(ls)
        value, threshold = pb_scan(scores, labels, rows=rows)
        assert got.value == value and got.threshold == threshold


# --------------------------------------------------------------------------
# c03 AUPRO vs threshold enumeration
# --------------------------------------------------------------------------


def test_c03_aupro_matches_brute_force(rng):
    for _ in range(200):
        maps, masks = random_pool_arrays(rng)
        pool = masks_from_arrays(maps, masks)
        for cap in (0.3, 1.0):
            got = aupro(pool, cap=cap).value
            assert got == pytest.approx(aupro_brute(maps, masks, cap), abs=1e-6)


def test_c03_single_region_equals_partial_pixel_auroc(rng):
    # with exactly one region, mean per-region recall is the pooled TPR, so
    # AUPRO must coincide with the capped, normalized pixel AUROC
    for _ in range(50):
        m = rng.random((32, 32)).astype(np.float32)
        mask = np.zeros((32, 32), dtype=np.uint8)
        y = int(rng.integers(0, 25))
        x = int(rng.integers(0, 25))
        mask[y : y + int(rng.integers(2, 8)), x : x + int(rng.integers(2, 8))] = 1
        pool = masks_from_arrays([m], [mask])
        for cap in (0.3, 1.0):
            got = aupro(pool, cap=cap).value
            assert got == pytest.approx(partial_pixel_auroc([m], [mask], cap), abs=1e-6)


# --------------------------------------------------------------------------
# c04 cap semantics on a perfect map
# --------------------------------------------------------------------------


def test_c04_perfect_map_scores_exactly_one_at_every_cap(rng):
    for _ in range(20):
        n = int(rng.integers(1, 4))
        masks = [random_mask(rng, 24, 24) for _ in range(n)]
        if not any(k.any() for k in masks):
            masks[0][5:9, 3:7] = 1
        maps = [k.astype(np.float32) for k in masks]
        pool = masks_from_arrays(maps, masks)
        for cap in (0.001, 0.07, 0.3, 0.5, 1.0):
            assert aupro(pool, cap=cap).value == 1.0


# --------------------------------------------------------------------------
# c05 published results file re-renders the main table
# --------------------------------------------------------------------------


def test_c05_published_results_rerender_main_table():
    tree = load_results(DATA_DIR / "published_results.json")
    methods = ("PatchCore", "RD", "GLASS")
    datasets = ("RIADs", "BTAD", "VAD")

    image = render_table(
        tree, TableSpec(metrics=("im.AUROC", "im.PG2"), methods=methods, datasets=datasets)
    )
    pixel = render_table(
        tree, TableSpec(metrics=("pix.AUPRO", "pix.F1Max"), methods=methods, datasets=datasets)
    )
    assert "| PatchCore | 91.4/39.0 | 95.5/67.3 | 88.0/16.5 |" in image
    assert "| RD | 95.0/41.1 | 79.5/58.5 | —/— |" in pixel

    # every cell of both tables, not just the two headline ones
    for (method, dataset), want in IMAGE_CELLS.items():
        agg = aggregate_dataset(tree, method, dataset)
        got = f"{format_percent(agg['im.AUROC'])}/{format_percent(agg['im.PG2'])}"
        assert got == want, (method, dataset)
    for (method, dataset), want in PIXEL_CELLS.items():
        agg = aggregate_dataset(tree, method, dataset)
        got = f"{format_percent(agg['pix.AUPRO'])}/{format_percent(agg['pix.F1Max'])}"
        assert got == want, (method, dataset)


# --------------------------------------------------------------------------
# c06 combined rows recomputed from per-dataset rows
# --------------------------------------------------------------------------


def _tree_from_size_rows(rows, tmp_path):
    """Write one method's per-dataset percent rows as a legacy results file."""
    doc = {"net": {}}
    for dataset, (im_auroc, pix_f1, im_pg2) in rows.items():
        cell = {"im.AUROC": im_auroc, "im.PG2": im_pg2}
        if pix_f1 is not None:
            cell["pix.F1Max"] = pix_f1
        doc["net"][dataset] = {"all": cell}
    path = tmp_path / "rows.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return load_results(path)


def _recomputed_row(rows, tmp_path, datasets=("RIADs", "BTech", "VAD")):
    tree = _tree_from_size_rows(rows, tmp_path)
    agg = aggregate_datasets(tree, "net", datasets)
    return [agg[m] * 100.0 for m in SIZE_METRICS]


def test_c06_glass_combined_rows_recompute(tmp_path):
    for size in (128, 512):
        got = _recomputed_row(SIZE_ROWS[("GLASS", size)], tmp_path)
        for value, printed in zip(got, SUMMARY_ROWS[("GLASS", size)]):
            assert abs(value - printed) <= 0.1 + 1e-9, (size, value, printed)


def test_c06_combined_rows_at_size_256_recompute():
    tree = load_results(DATA_DIR / "published_results.json")
    for method, want in D256_SUMMARY.items():
        agg = aggregate_datasets(tree, method, ("RIADs", "BTAD", "VAD"))
        got = "/".join(format_percent(agg[m]) for m in SIZE_METRICS)
        assert got == want, method


@pytest.mark.xfail(
    strict=True,
    reason=(
        "the published combined rows for this method are inconsistent with its "
        "per-dataset rows: the size-128 row equals the mean with the third "
        "dataset dropped, and the size-512 row matches no mean of the printed "
        "per-dataset values (see notes/decisions.md)"
    ),
)
def test_c06_patchcore_combined_rows_recompute(tmp_path):
    for size in (128, 512):
        got = _recomputed_row(SIZE_ROWS[("PatchCore", size)], tmp_path)
        for value, printed in zip(got, SUMMARY_ROWS[("PatchCore", size)]):
            assert abs(value - printed) <= 0.1 + 1e-9, (size, value, printed)


def test_c06_patchcore_size128_row_is_two_dataset_mean(tmp_path):
    # documents where the printed size-128 row actually comes from
    got = _recomputed_row(
        SIZE_ROWS[("PatchCore", 128)], tmp_path, datasets=("RIADs", "BTech")
    )
    for value, printed in zip(got, SUMMARY_ROWS[("PatchCore", 128)]):
        assert abs(value - printed) <= 0.1 + 1e-9


# --------------------------------------------------------------------------
# c07 drift determinism, divergence, and plan distribution
# --------------------------------------------------------------------------


def _write_corpus(root: Path, n_images: int = 50) -> list:
    from PIL import Image

    gen = np.random.default_rng(90125)
    rels = []
    for i in range(n_images):
        rel = Path(f"img_{i:03d}.png")
        arr = gen.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        root.mkdir(parents=True, exist_ok=True)
        Image.fromarray(arr, "RGB").save(root / rel)
        if i % 3 == 0:
            mask = np.zeros((32, 32), dtype=np.uint8)
            mask[8:16, 4:20] = 1
            write_mask_png(mask, root / "masks" / rel)
        rels.append(rel)
    return rels


def test_c07_corpus_determinism_and_seed_divergence(tmp_path):
    src = tmp_path / "src"
    image_rels = _write_corpus(src)

    out_a = tmp_path / "seed7_a"
    out_b = tmp_path / "seed7_b"
    out_c = tmp_path / "seed8"
    log = drift.perturb_corpus(src, out_a, 7)
    assert log["seed"] == 7
    assert set(log["plans"]) == {rel.as_posix() for rel in image_rels}
    drift.perturb_corpus(src, out_b, 7)
    drift.perturb_corpus(src, out_c, 8)

    files_a = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(out_b) for p in out_b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel

    differing = sum(
        (out_a / rel).read_bytes() != (out_c / rel).read_bytes() for rel in image_rels
    )
    assert len(image_rels) == 50
    assert differing > 45  # >90% of images must change with the seed


def _assert_params_in_range(spec):
    p = spec.params
    if spec.name == "gaussian_blur":
        assert p["kernel"] == drift.BLUR_KERNEL
        assert drift.BLUR_SIGMA_RANGE[0] <= p["sigma"] <= drift.BLUR_SIGMA_RANGE[1]
    elif spec.name == "gaussian_noise":
        assert p["mean"] == drift.NOISE_MEAN and p["std"] == drift.NOISE_STD
        assert drift.NOISE_SCALE_RANGE[0] <= p["scale"] <= drift.NOISE_SCALE_RANGE[1]
        assert 0 <= p["rng_key"] < 2**64
    elif spec.name == "color_jitter":
        for key in ("brightness", "contrast", "saturation"):
            assert drift.JITTER_RANGE[0] <= p[key] <= drift.JITTER_RANGE[1]
    elif spec.name == "random_shadow":
        assert p["factor"] == drift.SHADOW_FACTOR
        assert len(p["layers"]) == drift.SHADOW_LAYERS
        for quad in p["layers"]:
            assert len(quad) == 4
            assert all(0.0 <= v <= 1.0 for point in quad for v in point)
    elif spec.name == "rotate":
        assert drift.ROTATION_RANGE[0] <= p["angle"] <= drift.ROTATION_RANGE[1]
    elif spec.name == "crop_resize":
        assert drift.CROP_SCALE_RANGE[0] <= p["area_scale"] <= drift.CROP_SCALE_RANGE[1]
        assert 0.0 <= p["cx"] <= 1.0 and 0.0 <= p["cy"] <= 1.0
    elif spec.name == "perspective":
        assert p["distortion"] == drift.PERSPECTIVE_DISTORTION
        assert len(p["shifts"]) == 8
        assert all(0.0 <= s <= 1.0 for s in p["shifts"])
    else:  # pragma: no cover
        raise AssertionError(f"unexpected transform {spec.name}")


def test_c07_plan_distribution_over_10000_draws():
    n = 10_000
    count_freq = Counter()
    category_hits = Counter()
    transform_hits = Counter()
    for i in range(n):
        plan = drift.sample_plan(7, f"mc_{i:05d}.png")
        cats = [t.category for t in plan.transforms]
        assert len(cats) in (1, 2)
        assert len(set(cats)) == len(cats)
        assert cats == [c for c in drift.CATEGORY_ORDER if c in cats]
        count_freq[len(cats)] += 1
        for t in plan.transforms:
            assert t.name in drift.TRANSFORMS[t.category]
            category_hits[t.category] += 1
            transform_hits[(t.category, t.name)] += 1
            _assert_params_in_range(t)

    def within_3_sigma(hits, trials, p):
        sigma = math.sqrt(p * (1.0 - p) / trials)
        return abs(hits / trials - p) <= 3.0 * sigma

    # 1 or 2 categories, equally likely
    assert within_3_sigma(count_freq[1], n, 0.5)
    for category in drift.CATEGORY_ORDER:
        # marginal inclusion probability: 1/2 * 1/3 + 1/2 * 2/3
        assert within_3_sigma(category_hits[category], n, 0.5)
        options = drift.TRANSFORMS[category]
        for name in options:
            assert within_3_sigma(
                transform_hits[(category, name)],
                category_hits[category],
                1.0 / len(options),
            )


# --------------------------------------------------------------------------
# c08 contamination contract
# --------------------------------------------------------------------------


def _sample(sid, split, label):
    return SampleRecord(
        sample_id=sid,
        split=split,
        label=label,
        image_path=f"images/{sid}.png",
        resolution=256,
    )


def test_c08_contamination_moves_exactly_80_of_500(tmp_path):
    samples = [_sample(f"tg{i:03d}", "train", "good") for i in range(500)]
    samples += [_sample(f"xb{i:03d}", "test", "bad") for i in range(120)]
    samples += [_sample(f"xg{i:03d}", "test", "good") for i in range(60)]
    manifest = DatasetManifest(category="cat", samples=tuple(samples), has_pixel_labels=False)

    out, record = protocols.contaminate(manifest, 0.16, seed=11)
    moved = set(record.moved_ids)
    assert len(moved) == 80

    train = [s for s in out.samples if s.split == "train"]
    assert len(train) == 500
    assert sum(s.label == "good" for s in train) == 420  # 80 normals replaced
    assert len(out.samples) == len(samples) - 80

    test_ids = {s.sample_id for s in out.samples if s.split == "test"}
    assert not moved & test_ids
    assert moved <= {s.sample_id for s in train}
    assert all(s.label == "bad" for s in out.samples if s.sample_id in moved)

    # replay from the in-memory record and from its serialized form
    assert protocols.apply_record(manifest, record) == out
    path = tmp_path / "record.json"
    protocols.save_record(record, path)
    assert protocols.apply_record(manifest, protocols.load_record(path)) == out


# --------------------------------------------------------------------------
# c09 pixel-metric throughput and binned agreement
# --------------------------------------------------------------------------


def _speed_pool(rng, size, n_images):
    maps = [rng.random((size, size), dtype=np.float32) for _ in range(n_images)]
    masks = [random_mask(rng, size, size) for _ in range(n_images)]
    if not any(k.any() for k in masks):
        masks[0][size // 2, size // 2] = 1
    return maps, masks


def test_c09_exact_mode_speed_single_threaded(rng, monkeypatch):
    monkeypatch.setenv("ADEVAL_THREADS", "1")
    maps, masks = _speed_pool(rng, 256, 100)
    t0 = time.perf_counter()
    metrics = score_pixel_metrics(masks_from_arrays(maps, masks))
    elapsed = time.perf_counter() - t0
    assert all(m.available for m in metrics.values())
    assert elapsed < 5.0, f"exact pass took {elapsed:.2f}s"


def test_c09_binned_mode_speed(rng):
    maps, masks = _speed_pool(rng, 512, 100)
    t0 = time.perf_counter()
    metrics = score_pixel_metrics(masks_from_arrays(maps, masks), exact_limit=0)
    elapsed = time.perf_counter() - t0
    assert all(m.available for m in metrics.values())
    assert elapsed < 10.0, f"binned pass took {elapsed:.2f}s"


def test_c09_binned_agrees_with_exact(rng):
    for _ in range(30):
        maps, masks = random_pool_arrays(rng)
        pool = masks_from_arrays(maps, masks)
        exact = score_pixel_metrics(pool)
        binned = score_pixel_metrics(pool, exact_limit=0)
        for name in exact:
            assert binned[name].value == pytest.approx(exact[name].value, abs=5e-4)


# --------------------------------------------------------------------------
# c10 monotone-transform invariance
# --------------------------------------------------------------------------

MONOTONE = (np.exp, lambda x: 2.0 * x + 1.0)


def test_c10_image_metrics_invariant_under_monotone_transforms(rng):
    for _ in range(100):
        scores, labels = random_labeled_scores(rng)
        scores = np.round(scores, 9)  # spacing stays far above float noise
        base = score_image_metrics(LabeledScores(scores, labels))
        for fn in MONOTONE:
            moved = score_image_metrics(LabeledScores(fn(scores), labels))
            for name, metric in base.items():
                assert moved[name].value == pytest.approx(metric.value, abs=1e-12)


def test_c10_pixel_metrics_invariant_under_monotone_transforms(rng):
    for _ in range(100):
        maps, masks = random_pool_arrays(rng, n_images=2, size=24, quantize=10_000)
        base = score_pixel_metrics(masks_from_arrays(maps, masks))
        for fn in MONOTONE:
            moved = score_pixel_metrics(masks_from_arrays([fn(m) for m in maps], masks))
            for name, metric in base.items():
                assert moved[name].value == pytest.approx(metric.value, abs=1e-12)
