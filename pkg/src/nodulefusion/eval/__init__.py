"""Metrics, ROC analysis and cross-validation."""

from .cv import FoldError, FoldResult, MetricsReport, check_folds, run_cv, summarize
from .folds import stratified_folds, task_rng, train_test_indices
from .metrics import (
    IsoAccuracy,
    RocCurve,
    auc,
    confusion_metrics,
    iso_accuracy_threshold,
    roc_auc,
    t_test,
    write_roc_csv,
)

__all__ = [
    "FoldError",
    "FoldResult",
    "MetricsReport",
    "check_folds",
    "run_cv",
    "summarize",
    "stratified_folds",
    "task_rng",
    "train_test_indices",
    "IsoAccuracy",
    "RocCurve",
    "auc",
    "confusion_metrics",
    "iso_accuracy_threshold",
    "roc_auc",
    "t_test",
    "write_roc_csv",
]
