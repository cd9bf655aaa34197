"""Synthesize-then-compare failure and anomaly detection for semantic segmentation."""

from ._synthcp import (
    ConfigError,
    InputError,
    IoError,
    NumericalError,
    PrerequisiteError,
    Run,
    ShapeError,
    __version__,
    aupr,
    auroc,
    compute_error_map,
    compute_iou,
    config_reference,
    cosine_distance_map,
    fpr_at_95_tpr,
    full_run,
    generate_scene,
    msp_postprocess,
    normalize_config,
    regression_metrics,
    run_stage,
    stages,
    status,
)

__all__ = [
    "ConfigError",
    "InputError",
    "IoError",
    "NumericalError",
    "PrerequisiteError",
    "Run",
    "ShapeError",
    "__version__",
    "aupr",
    "auroc",
    "compute_error_map",
    "compute_iou",
    "config_reference",
    "cosine_distance_map",
    "fpr_at_95_tpr",
    "full_run",
    "generate_scene",
    "msp_postprocess",
    "normalize_config",
    "regression_metrics",
    "run_stage",
    "stages",
    "status",
]
