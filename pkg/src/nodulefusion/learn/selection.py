"""Feature selection: SVM-wrapped forward search, variance filter, ReliefF."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from ..eval.folds import stratified_folds, task_rng, train_test_indices
from ..eval.metrics import auc
from .svm import svm_train

__all__ = [
    "CvAucScorer",
    "SelectionResult",
    "relieff_rank",
    "relieff_select",
    "sfs",
    "sfs_select",
    "variance_filter",
]


class CvAucScorer:
    """Mean k-fold AUC of an RBF SVM restricted to a column subset.

    Folds are fixed at construction so every candidate subset is judged on
    the same partitions. Results are memoised by subset.
    """

    def __init__(self, X, y, folds=5, seed=0, C=1.0, gamma_scale=1.0):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y)
        parts = stratified_folds(self.y, folds, seed)
        self.splits = [train_test_indices(parts, i) for i in range(folds)]
        self.C = C
        self.gamma_scale = gamma_scale
        self._cache: dict[tuple, float] = {}

    def __call__(self, subset) -> float:
        key = tuple(subset)
        if key not in self._cache:
            cols = list(key)
            aucs = []
            for tr, va in self.splits:
                Xtr = self.X[np.ix_(tr, cols)]
                model = svm_train(Xtr, self.y[tr], C=self.C, gamma_scale=self.gamma_scale)
                aucs.append(auc(model.decision(self.X[np.ix_(va, cols)]), self.y[va]))
            self._cache[key] = float(np.mean(aucs))
        return self._cache[key]


def sfs(n_features: int, score, threshold=1e-6, baseline=0.5):
    """Greedy forward selection.

    Starting from the empty set (scored ``baseline``), add the column whose
    inclusion scores highest (lowest index on ties) while it beats the
    incumbent by more than ``threshold``.

    Returns
    -------
    selected : list of int
        Columns in the order they were added.
    trace : list of float
        Score after each addition.
    """
    selected: list[int] = []
    trace: list[float] = []
    best = baseline
    remaining = list(range(n_features))
    while remaining:
        scores = [score(selected + [j]) for j in remaining]
        k = int(np.argmax(scores))
        if not scores[k] - best > threshold:
            break
        best = scores[k]
        selected.append(remaining.pop(k))
        trace.append(best)
    return selected, trace


@dataclass
class SelectionResult:
    selected: list[str]
    runs: list[list[str]]
    traces: list[list[float]]
    min_runs: int = 4
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "selected": self.selected,
            "runs": self.runs,
            "traces": self.traces,
            "min_runs": self.min_runs,
            "counts": self.counts,
        }


def sfs_select(
    X,
    y,
    names,
    folds=5,
    seed=0,
    min_runs=4,
    inner_folds=5,
    C=1.0,
    gamma_scale=1.0,
    threshold=1e-6,
    scorer_factory=None,
) -> SelectionResult:
    """Consensus forward selection.

    The rows are split into ``folds`` stratified parts; for each part, SFS
    runs on the remaining rows with an ``inner_folds`` CV-AUC criterion. A
    feature enters the consensus when it is chosen in at least ``min_runs``
    runs. ``scorer_factory(X, y, run)`` may replace the CV-AUC criterion.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    names = list(names)
    if X.shape[1] != len(names):
        raise ValueError("one name per column required")
    parts = stratified_folds(y, folds, seed)
    runs, traces = [], []
    for r in range(folds):
        rows, _ = train_test_indices(parts, r)
        if scorer_factory is None:
            inner_seed = int(task_rng(seed, r).integers(1 << 31))
            score = CvAucScorer(X[rows], y[rows], inner_folds, inner_seed, C, gamma_scale)
        else:
            score = scorer_factory(X[rows], y[rows], r)
        chosen, trace = sfs(X.shape[1], score, threshold)
        runs.append([names[j] for j in chosen])
        traces.append(trace)
    counts = {n: sum(n in run for run in runs) for n in names}
    consensus = [n for n in names if counts[n] >= min_runs]
    return SelectionResult(consensus, runs, traces, min_runs, {n: c for n, c in counts.items() if c})


def variance_filter(X, rtol=1e-12) -> np.ndarray:
    """Boolean mask of columns whose variance is at least the mean variance.

    The comparison allows a relative slack of ``rtol`` so columns of equal
    variance are all kept despite rounding in the mean.
    """
    v = np.var(np.asarray(X, dtype=np.float64), axis=0)
    return v >= v.mean() * (1 - rtol)


def relieff_rank(X, y, k=10, m=None, rng=None) -> np.ndarray:
    """Two-class ReliefF feature weights.

    Columns are min-max scaled to [0, 1] (constant columns to 0). ``m`` rows
    are drawn without replacement (all rows by default); for each, the
    ``k`` nearest hits lower and the ``k`` nearest misses raise a feature's
    weight by its mean absolute scaled difference, divided by ``m``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n, d = X.shape
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    Z = (X - lo) / span
    rng = rng if rng is not None else np.random.default_rng(0)
    m = n if m is None else min(m, n)
    draws = np.arange(n) if m == n else np.sort(rng.permutation(n)[:m])
    sizes = {c: int(np.sum(y == c)) for c in (0, 1)}
    if min(sizes.values()) == 0:
        raise ValueError("ReliefF needs both classes")
    k_eff = min(k, sizes[0] - 1, sizes[1] - 1)
    if k_eff < k:
        warnings.warn(f"ReliefF k={k} reduced to {k_eff} by class size", RuntimeWarning, stacklevel=2)
    k_eff = max(k_eff, 1)
    D = cdist(Z, Z, "euclidean")
    w = np.zeros(d)
    for i in draws:
        same = np.flatnonzero((y == y[i]) & (np.arange(n) != i))
        other = np.flatnonzero(y != y[i])
        hits = same[np.argsort(D[i, same], kind="stable")[:k_eff]]
        misses = other[np.argsort(D[i, other], kind="stable")[:k_eff]]
        if len(hits):
            w -= np.abs(Z[hits] - Z[i]).mean(axis=0)
        w += np.abs(Z[misses] - Z[i]).mean(axis=0)
    return w / len(draws)


def relieff_select(weights, top=None) -> np.ndarray:
    """Column indices by decreasing weight: the ``top`` best, or all positive."""
    weights = np.asarray(weights)
    order = np.argsort(-weights, kind="stable")
    if top is None:
        return order[weights[order] > 0]
    return order[:top]
