"""Model-agnostic evaluation engine for visual industrial anomaly detection.

Evaluates exported anomaly scores and score maps against dataset manifests:
image metrics (AUROC, F1-Max, PG2, PB2), pixel metrics (AUROC, AUPRO,
F1-Max), seeded experiment protocols (contamination, supervised and
validation splits, drift perturbation), and results aggregation/rendering.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateScoresError,
    EngineError,
    InputError,
    ValidationError,
)
from .image_metrics import (
    LabeledScores,
    MetricValue,
    auroc,
    f1max,
    pb_at,
    pg_at,
    score_image_metrics,
    sweep,
)
from .maps import (
    AnomalyMap,
    PixelMask,
    load_map,
    load_mask,
    read_scores_csv,
    write_map_png16,
    write_map_raw,
    write_mask_png,
    write_scores_csv,
)
from .pixel_metrics import (
    PixelPool,
    ProCurve,
    aupro,
    auroc_pixel,
    build_pool,
    f1max_pixel,
    pro_curve,
    score_pixel_metrics,
)
from .protocols import (
    EpochTrace,
    ProtocolRecord,
    apply_record,
    contaminate,
    select_epoch,
    supervised_split,
    validation_split,
)
from .records import (
    DatasetManifest,
    SampleRecord,
    load_manifest,
    save_manifest,
    validate_manifest,
)
from .regions import RegionSet, label_regions
from .report import (
    ResultsTree,
    TableSpec,
    aggregate_dataset,
    aggregate_datasets,
    format_percent,
    load_results,
    merge_seeds,
    render_table,
    save_results,
)
from .scoring import CategoryScores, score_category
from .seeding import Seed, priority, substream

__all__ = [
    "AnomalyMap",
    "CategoryScores",
    "DatasetManifest",
    "DegenerateScoresError",
    "EngineError",
    "EpochTrace",
    "InputError",
    "LabeledScores",
    "MetricValue",
    "PixelMask",
    "PixelPool",
    "ProCurve",
    "ProtocolRecord",
    "RegionSet",
    "ResultsTree",
    "SampleRecord",
    "Seed",
    "TableSpec",
    "ValidationError",
    "aggregate_dataset",
    "aggregate_datasets",
    "apply_record",
    "aupro",
    "auroc",
    "auroc_pixel",
    "build_pool",
    "contaminate",
    "f1max",
    "f1max_pixel",
    "format_percent",
    "label_regions",
    "load_manifest",
    "load_map",
    "load_mask",
    "load_results",
    "merge_seeds",
    "pb_at",
    "pg_at",
    "priority",
    "pro_curve",
    "read_scores_csv",
    "render_table",
    "save_manifest",
    "save_results",
    "score_category",
    "score_image_metrics",
    "score_pixel_metrics",
    "select_epoch",
    "substream",
    "supervised_split",
    "sweep",
    "validate_manifest",
    "validation_split",
    "write_map_png16",
    "write_map_raw",
    "write_mask_png",
    "write_scores_csv",
]
