"""Image-tree to feature-bank exporter."""

from .exporter import (ExportResult, ExportSpec, PreprocessProfile, SPLITS,
                       __version__, build_backbone, export_features,
                       read_split_file, scan_tree)

__all__ = [
    "ExportResult",
    "ExportSpec",
    "PreprocessProfile",
    "SPLITS",
    "__version__",
    "build_backbone",
    "export_features",
    "read_split_file",
    "scan_tree",
]
