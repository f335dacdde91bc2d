"""Cross-validation driver and the metrics report."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .folds import stratified_folds, train_test_indices
from .metrics import confusion_metrics, iso_accuracy_threshold, roc_auc

__all__ = ["FoldError", "FoldResult", "MetricsReport", "check_folds", "run_cv", "summarize"]

METRICS = ("auc", "acc", "sen", "spe")


class FoldError(RuntimeError):
    """A pipeline stage failed inside one fold."""

    def __init__(self, fold: int, stage: str, cause: BaseException):
        super().__init__(f"fold {fold}, stage {stage}: {type(cause).__name__}: {cause}")
        self.fold = fold
        self.stage = stage
        self.cause = cause


@dataclass
class FoldResult:
    fold: int
    test_index: list[int]
    labels: list[int]
    scores: list[float]
    auc: float
    acc: float
    sen: float
    spe: float
    iso: dict
    info: dict = field(default_factory=dict)

    @classmethod
    def from_scores(cls, fold, test_index, labels, scores, threshold=0.0, info=None) -> "FoldResult":
        labels = [int(v) for v in labels]
        scores = [float(s) for s in scores]
        roc = roc_auc(scores, labels)
        acc, sen, spe = confusion_metrics(scores, labels, threshold)
        iso = iso_accuracy_threshold(roc)
        i_acc, i_sen, i_spe = confusion_metrics(scores, labels, iso.threshold, inclusive=True)
        iso_d = {
            # +inf (predict nothing positive) has no JSON spelling
            "threshold": iso.threshold if np.isfinite(iso.threshold) else None,
            "fpr": iso.fpr,
            "tpr": iso.tpr,
            "slope": iso.slope,
            "intercept": iso.intercept,
            "acc": i_acc,
            "sen": i_sen,
            "spe": i_spe,
        }
        return cls(fold, [int(i) for i in test_index], labels, scores, roc.auc, acc, sen, spe, iso_d, info or {})


def summarize(values) -> dict:
    """Mean and sample (N-1) standard deviation."""
    v = np.asarray(values, dtype=np.float64)
    std = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
    return {"mean": float(np.mean(v)), "std": std}


@dataclass
class MetricsReport:
    pipeline: str
    seed: int
    folds: list[FoldResult]
    meta: dict = field(default_factory=dict)

    def aggregate(self) -> dict:
        out = {m: summarize([getattr(f, m) for f in self.folds]) for m in METRICS}
        for m in ("acc", "sen", "spe"):
            out[f"iso_{m}"] = summarize([f.iso[m] for f in self.folds])
        return out

    def pooled_roc(self):
        """ROC of all held-out scores pooled across folds."""
        return roc_auc([s for f in self.folds for s in f.scores], [y for f in self.folds for y in f.labels])

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "seed": self.seed,
            "meta": self.meta,
            "aggregate": self.aggregate(),
            "folds": [f.__dict__ for f in self.folds],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(d["pipeline"], d["seed"], [FoldResult(**f) for f in d["folds"]], d.get("meta", {}))


def check_folds(labels, folds):
    for i, f in enumerate(folds):
        if len(set(np.asarray(labels)[f].tolist())) < 2:
            raise ValueError(f"fold {i} holds a single class; need more rows of each class")


def _run_fold(fold_fn, folds, i):
    train, test = train_test_indices(folds, i)
    return fold_fn(i, train, test)


def run_cv(labels, fold_fn, name="pipeline", k=5, seed=0, workers=1, meta=None) -> MetricsReport:
    """Score every held-out fold and collect the report.

    Parameters
    ----------
    labels : 0/1 array for all rows
    fold_fn : callable ``(fold, train_index, test_index) -> (scores, info)``
        Trains on the training rows and scores the test rows. Exceptions
        that are not already :class:`FoldError` are wrapped with the fold id.
    workers : >1 runs folds in worker processes (``fold_fn`` must pickle)
    """
    labels = np.asarray(labels)
    folds = stratified_folds(labels, k, seed)
    check_folds(labels, folds)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_fold, fold_fn, folds, i) for i in range(k)]
            outputs = []
            for i, fut in enumerate(futures):
                try:
                    outputs.append(fut.result())
                except FoldError:
                    raise
                except Exception as exc:
                    raise FoldError(i, "fold", exc) from exc
    else:
        outputs = []
        for i in range(k):
            try:
                outputs.append(_run_fold(fold_fn, folds, i))
            except FoldError:
                raise
            except Exception as exc:
                raise FoldError(i, "fold", exc) from exc
    results = []
    for i, (scores, info) in enumerate(outputs):
        test = folds[i]
        results.append(FoldResult.from_scores(i, test, labels[test], scores, info=info))
    return MetricsReport(name, seed, results, meta or {})
