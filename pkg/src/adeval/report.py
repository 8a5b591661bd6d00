"""Results persistence, aggregation across seeds and datasets, rendering.

The results tree nests method -> dataset -> category -> seed -> metric.
Leaves are fractions in [0, 1] or None for an explicitly unavailable metric;
a metric is never silently absent. Aggregation is an unweighted mean at each
level (seeds, then categories, then datasets for multi-dataset summaries),
skipping unavailable entries. Rendering multiplies by 100 and rounds
half-up to one decimal, at render time only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Optional, Sequence

from .errors import InputError, ValidationError
from .image_metrics import MetricValue

METRICS = (
    "im.AUROC",
    "im.F1Max",
    "im.PG2",
    "im.PB2",
    "pix.AUROC",
    "pix.AUPRO",
    "pix.F1Max",
)

SCHEMA_VERSION = 1

UNAVAILABLE_CELL = "—"  # em dash, the tables' marker for missing values


def _check_metric(name: str) -> str:
    if name not in METRICS:
        raise ValidationError(f"unknown metric name {name!r}")
    return name


@dataclass
class ResultsTree:
    """Nested results plus run metadata; the engine's one persistent artifact."""

    results: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def set_cell(
        self,
        method: str,
        dataset: str,
        category: str,
        seed: int | str,
        metrics: dict,
    ) -> None:
        """Store one scored (method, dataset, category, seed) cell.

        Metric values may be MetricValue instances or plain fractions; every
        registry metric not mentioned is stored as unavailable.
        """
        cell: dict[str, Optional[float]] = {m: None for m in METRICS}
        for name, value in metrics.items():
            _check_metric(name)
            if isinstance(value, MetricValue):
                cell[name] = value.value
            elif value is None:
                cell[name] = None
            else:
                cell[name] = float(value)
        node = self.results.setdefault(method, {}).setdefault(dataset, {})
        node.setdefault(category, {})[str(seed)] = cell

    def methods(self) -> tuple[str, ...]:
        return tuple(self.results)

    def datasets(self, method: str) -> tuple[str, ...]:
        return tuple(self.results.get(method, {}))

    def categories(self, method: str, dataset: str) -> tuple[str, ...]:
        return tuple(self.results.get(method, {}).get(dataset, {}))


@dataclass(frozen=True)
class MetricSummary:
    mean: Optional[float]
    std: Optional[float]
    n_seeds: int

    @property
    def available(self) -> bool:
        return self.mean is not None


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _std(values: Sequence[float]) -> Optional[float]:
    if len(values) < 2:
        return None
    m = _mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / (len(values) - 1))


def merge_seeds(
    tree: ResultsTree, method: str, dataset: str
) -> dict[str, dict[str, MetricSummary]]:
    """Per-category mean (and sample std) over seeds for one dataset."""
    try:
        categories = tree.results[method][dataset]
    except KeyError as exc:
        raise ValidationError(f"no results for method={method!r} dataset={dataset!r}") from exc
    out: dict[str, dict[str, MetricSummary]] = {}
    for category, seeds in categories.items():
        if not seeds:
            raise ValidationError(f"category {category!r} has no seeds")
        summary: dict[str, MetricSummary] = {}
        for metric in METRICS:
            values = [seeds[s].get(metric) for s in seeds]
            present = [v for v in values if v is not None]
            if present and len(present) != len(values):
                raise ValidationError(
                    f"{method}/{dataset}/{category}: metric {metric} is available "
                    f"for {len(present)} of {len(values)} seeds; refusing to average"
                )
            if not present:
                summary[metric] = MetricSummary(None, None, len(values))
            else:
                summary[metric] = MetricSummary(
                    _mean(present), _std(present), len(present)
                )
        out[category] = summary
    return out


def aggregate_dataset(
    tree: ResultsTree,
    method: str,
    dataset: str,
    expected_categories: Optional[Sequence[str]] = None,
) -> dict[str, Optional[float]]:
    """Unweighted mean over a dataset's categories, seeds merged first.

    Metrics unavailable in some categories are averaged over the rest; a
    metric unavailable everywhere stays unavailable.
    """
    per_category = merge_seeds(tree, method, dataset)
    if expected_categories is not None:
        missing = sorted(set(expected_categories) - set(per_category))
        if missing:
            raise ValidationError(
                f"{method}/{dataset}: missing categories {', '.join(missing)}"
            )
    out: dict[str, Optional[float]] = {}
    for metric in METRICS:
        values = [
            s[metric].mean for s in per_category.values() if s[metric].available
        ]
        out[metric] = _mean(values) if values else None
    return out


def aggregate_datasets(
    tree: ResultsTree, method: str, datasets: Sequence[str]
) -> dict[str, Optional[float]]:
    """Mean of dataset means; the tables' multi-dataset summary rows."""
    per_dataset = [aggregate_dataset(tree, method, d) for d in datasets]
    out: dict[str, Optional[float]] = {}
    for metric in METRICS:
        values = [d[metric] for d in per_dataset if d[metric] is not None]
        out[metric] = _mean(values) if values else None
    return out


def format_percent(value: Optional[float]) -> str:
    """Render a fraction as a 1-decimal percentage, half-up on the exact value."""
    if value is None:
        return UNAVAILABLE_CELL
    scaled = Decimal(value) * 100
    return str(scaled.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class TableSpec:
    """What to render: methods down, datasets across, metrics inside cells."""

    metrics: tuple[str, ...]
    methods: tuple[str, ...]
    datasets: tuple[str, ...]
    bold_max: bool = False
    combined_label: Optional[str] = None  # adds a mean-of-datasets column

    def __post_init__(self) -> None:
        for m in self.metrics:
            _check_metric(m)


def _spec_cells(tree: ResultsTree, spec: TableSpec):
    """Full-precision per-metric values for every (method, column)."""
    columns = list(spec.datasets)
    if spec.combined_label is not None:
        columns.append(spec.combined_label)
    cells: dict[tuple[str, str], list[Optional[float]]] = {}
    for method in spec.methods:
        for dataset in spec.datasets:
            agg = aggregate_dataset(tree, method, dataset)
            cells[(method, dataset)] = [agg[m] for m in spec.metrics]
        if spec.combined_label is not None:
            agg = aggregate_datasets(tree, method, spec.datasets)
            cells[(method, spec.combined_label)] = [agg[m] for m in spec.metrics]
    return columns, cells


def render_table(tree: ResultsTree, spec: TableSpec) -> str:
    """Markdown table with slash-separated metric cells, 1 decimal, — gaps."""
    columns, cells = _spec_cells(tree, spec)
    bold: set[tuple[str, str, int]] = set()
    if spec.bold_max:
        for col in columns:
            for k in range(len(spec.metrics)):
                best = None
                for method in spec.methods:
                    v = cells[(method, col)][k]
                    if v is not None and (best is None or v > best):
                        best = v
                if best is None:
                    continue
                for method in spec.methods:
                    if cells[(method, col)][k] == best:
                        bold.add((method, col, k))
    lines = ["| method | " + " | ".join(columns) + " |" if columns else "| method |"]
    lines.append("| --- |" + " --- |" * len(columns))
    for method in spec.methods:
        row = [method]
        for col in columns:
            parts = []
            for k, v in enumerate(cells[(method, col)]):
                text = format_percent(v)
                if (method, col, k) in bold:
                    text = f"**{text}**"
                parts.append(text)
            row.append("/".join(parts))
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def table_to_csv(tree: ResultsTree, spec: TableSpec) -> str:
    """The same cells as render_table, unbolded, in CSV form."""
    columns, cells = _spec_cells(tree, spec)
    lines = [",".join(["method"] + columns)]
    for method in spec.methods:
        row = [method]
        for col in columns:
            row.append("/".join(format_percent(v) for v in cells[(method, col)]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _normalize_cell(raw: dict, scale: float, context: str) -> dict:
    cell: dict[str, Optional[float]] = {m: None for m in METRICS}
    for name, value in raw.items():
        _check_metric(name)
        if value is None:
            continue
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise InputError(f"{context}: metric {name} has non-numeric value {value!r}")
        cell[name] = float(value) * scale
    return cell


def _looks_like_metrics(node: dict) -> bool:
    return bool(node) and all(k in METRICS for k in node)


def _iter_numeric_leaves(node):
    if isinstance(node, dict):
        for v in node.values():
            yield from _iter_numeric_leaves(v)
    elif isinstance(node, (int, float)) and not isinstance(node, bool):
        yield float(node)


def load_results(path: str | Path) -> ResultsTree:
    """Read a results file, accepting the legacy layout and the v1 schema.

    Legacy files carry no schema_version; their root is the method map
    directly, the seed level may be absent (treated as seed "0"), metrics may
    be missing (stored unavailable), and values may be percentages, detected
    by any value exceeding 1.5 and scaled back to fractions.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read results {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"results {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"results {path}: root must be an object")

    if "schema_version" in doc:
        if doc["schema_version"] != SCHEMA_VERSION:
            raise InputError(
                f"results {path}: unsupported schema_version {doc['schema_version']!r}"
            )
        raw = doc.get("results", {})
        metadata = doc.get("metadata", {})
        scale = 1.0
    else:
        raw = doc
        metadata = {}
        scale = 1.0
        if any(v > 1.5 for v in _iter_numeric_leaves(raw)):
            scale = 0.01

    tree = ResultsTree(metadata=dict(metadata))
    for method, datasets in raw.items():
        if not isinstance(datasets, dict):
            raise InputError(f"results {path}: method {method!r} must map to datasets")
        for dataset, categories in datasets.items():
            if not isinstance(categories, dict):
                raise InputError(
                    f"results {path}: dataset {dataset!r} must map to categories"
                )
            for category, node in categories.items():
                context = f"{path}: {method}/{dataset}/{category}"
                if not isinstance(node, dict):
                    raise InputError(f"{context}: must be an object")
                if _looks_like_metrics(node):
                    seeds = {"0": node}
                else:
                    seeds = node
                for seed, metrics in seeds.items():
                    if not isinstance(metrics, dict):
                        raise InputError(f"{context}: seed {seed!r} must map metrics")
                    cell = _normalize_cell(metrics, scale, context)
                    tree.results.setdefault(method, {}).setdefault(
                        dataset, {}
                    ).setdefault(category, {})[str(seed)] = cell
    return tree


def save_results(tree: ResultsTree, path: str | Path) -> None:
    """Write the v1 schema: versioned, metadata-bearing, explicit nulls."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "metadata": tree.metadata,
        "results": tree.results,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def results_to_dict(tree: ResultsTree) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "metadata": tree.metadata,
        "results": tree.results,
    }
