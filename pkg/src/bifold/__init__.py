"""Weighted decision fusion for two-stage (detection -> classification) classifier ensembles."""

from .errors import BiFoldError
from .fusion import (
    FusionResult,
    average_runs,
    decode_flat_index,
    esvt_fuse,
    fuse,
    hard_vote,
    nwm_fuse,
    soft_vote,
    weighted_soft_vote,
)
from .labels import Method, Stage
from .metrics import (
    ClassMetrics,
    ConfusionMatrix,
    EvaluationReport,
    accuracy,
    build_confusion,
    per_class_metrics,
    profiles_from_validation,
)
from .pipeline import BiFoldConfig, BiFoldOutcome, run_batch, run_instance
from .profiles import ModelProfile, WeightVector, average_f1, uwcs_weights, validate_user_weights

__version__ = "0.1.0"

__all__ = [
    "BiFoldConfig",
    "BiFoldError",
    "BiFoldOutcome",
    "ClassMetrics",
    "ConfusionMatrix",
    "EvaluationReport",
    "FusionResult",
    "Method",
    "ModelProfile",
    "Stage",
    "WeightVector",
    "accuracy",
    "average_f1",
    "average_runs",
    "build_confusion",
    "decode_flat_index",
    "esvt_fuse",
    "fuse",
    "hard_vote",
    "nwm_fuse",
    "per_class_metrics",
    "profiles_from_validation",
    "run_batch",
    "run_instance",
    "soft_vote",
    "uwcs_weights",
    "validate_user_weights",
    "weighted_soft_vote",
]
