"""Filesystem bridge to the adeval scoring engine.

Writes manifests, score tables, and anomaly maps in the engine's on-disk
formats and drives evaluation through the `adeval` CLI as a subprocess.
"""

from .errors import BridgeError, EngineFailedError, EngineNotFoundError, FormatError
from .formats import (
    manifest_document,
    write_manifest,
    write_map_png16,
    write_map_raw,
    write_mask_png,
    write_scores_csv,
)
from .session import MAP_FORMATS, ExportSession, run_eval

__version__ = "0.1.0"

__all__ = [
    "BridgeError",
    "EngineFailedError",
    "EngineNotFoundError",
    "ExportSession",
    "FormatError",
    "MAP_FORMATS",
    "manifest_document",
    "run_eval",
    "write_manifest",
    "write_map_png16",
    "write_map_raw",
    "write_mask_png",
    "write_scores_csv",
    "__version__",
]
