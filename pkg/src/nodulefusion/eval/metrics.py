"""ROC curves, AUC, confusion-based rates and the ISO-accuracy operating point."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = [
    "IsoAccuracy",
    "RocCurve",
    "auc",
    "confusion_metrics",
    "iso_accuracy_threshold",
    "roc_auc",
    "t_test",
    "write_roc_csv",
]


@dataclass(frozen=True)
class RocCurve:
    """ROC points for thresholds "score >= t", from t = +inf down to min(score).

    ``tp``/``fp`` are the integer counts behind ``tpr``/``fpr``.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    auc: float
    n_pos: int
    n_neg: int


def _split(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if len(s) != len(y):
        raise ValueError("scores and labels differ in length")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0 or n_pos + n_neg != len(y):
        raise ValueError("ROC analysis needs 0/1 labels from both classes")
    return s, y, n_pos, n_neg


def roc_auc(scores, labels) -> RocCurve:
    """Threshold sweep over unique scores and the trapezoidal AUC.

    Counts are integers and the trapezoid is summed exactly, so the AUC equals
    the Mann-Whitney statistic U / (n+ n-) with ties counting one half.
    """
    s, y, n_pos, n_neg = _split(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.r_[0, np.cumsum(y == 1)[last]].astype(np.int64)
    fp = np.r_[0, np.cumsum(y == 0)[last]].astype(np.int64)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return RocCurve(
        thresholds=np.r_[np.inf, s[last]],
        fpr=fp / n_neg,
        tpr=tp / n_pos,
        tp=tp,
        fp=fp,
        auc=twice_area / (2 * n_pos * n_neg),
        n_pos=n_pos,
        n_neg=n_neg,
    )


def auc(scores, labels) -> float:
    """AUC, 0.5 when every score is tied."""
    return roc_auc(scores, labels).auc


def confusion_metrics(scores, labels, threshold=0.0, inclusive=False):
    """(ACC, SEN, SPE) predicting positive when score > threshold.

    With ``inclusive`` the rule is score >= threshold, matching ROC points.
    A rate whose denominator is empty is NaN.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    pred = s >= threshold if inclusive else s > threshold
    tp = int(np.sum(pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    acc = (tp + tn) / len(y)
    sen = tp / n_pos if n_pos else float("nan")
    spe = tn / n_neg if n_neg else float("nan")
    return acc, sen, spe


@dataclass(frozen=True)
class IsoAccuracy:
    """Tangent point of the ISO-accuracy family ``TPr = slope * FPr + a``."""

    threshold: float
    fpr: float
    tpr: float
    slope: float
    intercept: float
    accuracy: float


def iso_accuracy_threshold(roc: RocCurve, n_pos=None, n_neg=None) -> IsoAccuracy:
    """ROC point maximising TPr - slope * FPr with slope = n_neg / n_pos.

    Class counts default to those of ``roc``. With the curve's own counts
    TPr - slope * FPr = (TP - FP) / n_pos, so the maximisation runs on
    integers and the earliest (highest) threshold wins ties.
    """
    n_pos = roc.n_pos if n_pos is None else n_pos
    n_neg = roc.n_neg if n_neg is None else n_neg
    slope = n_neg / n_pos
    if n_pos == roc.n_pos and n_neg == roc.n_neg:
        k = int(np.argmax(roc.tp - roc.fp))
    else:
        k = int(np.argmax(roc.tpr - slope * roc.fpr))
    fpr, tpr = float(roc.fpr[k]), float(roc.tpr[k])
    acc = (int(roc.tp[k]) + roc.n_neg - int(roc.fp[k])) / (roc.n_pos + roc.n_neg)
    return IsoAccuracy(float(roc.thresholds[k]), fpr, tpr, slope, tpr - slope * fpr, acc)


def t_test(a, b):
    """Unpaired two-sample t-test (equal variances): (t statistic, p-value)."""
    res = stats.ttest_ind(np.asarray(a, float), np.asarray(b, float))
    return float(res.statistic), float(res.pvalue)


def write_roc_csv(path, roc: RocCurve) -> None:
    with open(path, "w") as fh:
        fh.write("threshold,fpr,tpr\n")
        for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
            fh.write(f"{t:.17g},{f:.17g},{p:.17g}\n")
