"""Classifier and feature-selection machinery."""

from .selection import (
    CvAucScorer,
    SelectionResult,
    relieff_rank,
    relieff_select,
    sfs,
    sfs_select,
    variance_filter,
)
from .smote import SmoteSamples, smote, smote_balance
from .svm import (
    SvmModel,
    default_gamma,
    dual_objective,
    kkt_violation,
    load_svm,
    rbf_kernel,
    save_svm,
    smo_solve,
    svm_score,
    svm_train,
)

__all__ = [
    "CvAucScorer",
    "SelectionResult",
    "relieff_rank",
    "relieff_select",
    "sfs",
    "sfs_select",
    "variance_filter",
    "SmoteSamples",
    "smote",
    "smote_balance",
    "SvmModel",
    "default_gamma",
    "dual_objective",
    "kkt_violation",
    "load_svm",
    "rbf_kernel",
    "save_svm",
    "smo_solve",
    "svm_score",
    "svm_train",
]
