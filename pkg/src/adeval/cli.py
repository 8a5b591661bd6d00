"""Command-line surface: score, perturb, contaminate, split, valsplit, report.

stdout carries only the primary artifact; every failure writes one JSON error
object to stderr and maps to the exit-code contract (0 ok, 2 validation,
3 input/IO, 4 internal).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import EngineError, ValidationError
from .maps import read_scores_csv
from .records import load_manifest, save_manifest
from .report import (
    METRICS,
    ResultsTree,
    TableSpec,
    load_results,
    render_table,
    table_to_csv,
    aggregate_dataset,
    aggregate_datasets,
)
from .scoring import score_category
from .pixel_metrics import DEFAULT_BINS, DEFAULT_FPR_CAP


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures into the exit contract
        raise ValidationError(f"argument error: {message}")


def _emit(text: str, out: str | None) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_score(args) -> int:
    manifest = load_manifest(args.manifest)
    scores = read_scores_csv(args.scores)
    result = score_category(
        manifest,
        scores,
        maps_root=args.maps_root,
        fpr_cap=args.fpr_cap,
        pg_budget=args.pg_budget,
        pb_budget=args.pb_budget,
        bins=args.bins,
        connectivity=args.connectivity,
        curve_out=args.curve_out,
    )
    doc = {
        "schema_version": 1,
        "metadata": {
            "seed": args.seed,
            "fpr_cap": args.fpr_cap,
            "pg_budget": args.pg_budget,
            "pb_budget": args.pb_budget,
            "pixel_mode": result.pixel_mode,
            "n_test_good": result.n_test_good,
            "n_test_bad": result.n_test_bad,
        },
        "results": {
            args.method: {
                args.dataset: {
                    result.category: {str(args.seed): result.as_fractions()}
                }
            }
        },
    }
    _emit(_json_text(doc), args.out)
    return 0


def cmd_perturb(args) -> int:
    from .drift import perturb_corpus

    log = perturb_corpus(args.input_dir, args.out, args.seed)
    _emit(_json_text({"seed": log["seed"], "images": len(log["plans"])}), None)
    return 0


def _run_protocol(args, fn, **kwargs) -> int:
    from .protocols import record_to_dict, save_record

    manifest = load_manifest(args.manifest)
    out_manifest, record = fn(manifest, seed=args.seed, **kwargs)
    save_manifest(out_manifest, args.out)
    save_record(record, str(args.out) + ".record.json")
    _emit(_json_text(record_to_dict(record)), None)
    return 0


def cmd_contaminate(args) -> int:
    from .protocols import contaminate

    return _run_protocol(args, contaminate, percent=args.percent)


def cmd_split(args) -> int:
    from .protocols import supervised_split

    return _run_protocol(args, supervised_split, n_anomalous=args.n_anomalous)


def cmd_valsplit(args) -> int:
    from .protocols import validation_split

    return _run_protocol(args, validation_split, fraction=args.fraction)


def _merge_trees(paths) -> ResultsTree:
    merged = ResultsTree()
    for path in paths:
        tree = load_results(path)
        merged.metadata.update(tree.metadata)
        for method, datasets in tree.results.items():
            for dataset, categories in datasets.items():
                for category, seeds in categories.items():
                    node = merged.results.setdefault(method, {}).setdefault(
                        dataset, {}
                    ).setdefault(category, {})
                    node.update(seeds)
    return merged


def cmd_report(args) -> int:
    tree = _merge_trees(args.results)
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    methods = (
        tuple(m.strip() for m in args.methods.split(","))
        if args.methods
        else tree.methods()
    )
    datasets = args.datasets
    if datasets:
        datasets = tuple(d.strip() for d in datasets.split(","))
    else:
        seen = []
        for method in methods:
            for d in tree.datasets(method):
                if d not in seen:
                    seen.append(d)
        datasets = tuple(seen)
    spec = TableSpec(
        metrics=metrics,
        methods=methods,
        datasets=datasets,
        bold_max=args.bold_max,
        combined_label=args.combined,
    )
    if args.format == "md":
        text = render_table(tree, spec)
    elif args.format == "csv":
        text = table_to_csv(tree, spec)
    else:
        cells = {}
        for method in spec.methods:
            per = {d: aggregate_dataset(tree, method, d) for d in spec.datasets}
            if spec.combined_label:
                per[spec.combined_label] = aggregate_datasets(
                    tree, method, spec.datasets
                )
            cells[method] = {
                col: {m: agg[m] for m in spec.metrics} for col, agg in per.items()
            }
        text = _json_text(cells)
    _emit(text, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adeval", description=__doc__)
    parser.add_argument("--version", action="version", version=f"adeval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="evaluate one category from scores and maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scores", required=True, help="CSV with header sample_id,score")
    p.add_argument("--maps-root", default=None, help="base dir for map/mask paths")
    p.add_argument("--method", default="model", help="method name used in the output")
    p.add_argument("--dataset", default="dataset", help="dataset name used in the output")
    p.add_argument("--seed", type=int, default=0, help="seed label for the output cell")
    p.add_argument("--fpr-cap", type=float, default=DEFAULT_FPR_CAP)
    p.add_argument("--pg-budget", type=float, default=0.02)
    p.add_argument("--pb-budget", type=float, default=0.02)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--curve-out", default=None, help="write the fpr,pro curve CSV here")
    p.add_argument("--out", default=None, help="write results JSON here instead of stdout")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("perturb", help="apply the seeded drift pipeline to a corpus")
    p.add_argument("input_dir")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("contaminate", help="mislabel bad test samples into train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--percent", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output manifest path")
    p.set_defaults(func=cmd_contaminate)

    p = sub.add_parser("split", help="move bad test samples into train (supervised)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-anomalous", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output manifest path")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("valsplit", help="carve a validation split out of train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fraction", type=float, default=0.10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output manifest path")
    p.set_defaults(func=cmd_valsplit)

    p = sub.add_parser("report", help="aggregate results files and render tables")
    p.add_argument("results", nargs="+", help="results.json files (legacy or v1)")
    p.add_argument("--metrics", default=",".join(METRICS))
    p.add_argument("--methods", default=None, help="comma-separated method filter")
    p.add_argument("--datasets", default=None, help="comma-separated dataset filter")
    p.add_argument("--combined", default=None, help="label for a mean-of-datasets column")
    p.add_argument("--bold-max", action="store_true")
    p.add_argument("--format", choices=("json", "md", "csv"), default="md")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except EngineError as exc:
        sys.stderr.write(
            _json_text({"error": {"type": type(exc).__name__, "message": str(exc)}})
        )
        return exc.exit_code
    except SystemExit:
        raise
    except Exception as exc:  # anything unplanned is an internal error
        sys.stderr.write(
            _json_text({"error": {"type": "InternalError", "message": str(exc)}})
        )
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
