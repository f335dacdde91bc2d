"""Seeded stratified k-fold partitions and per-task random streams."""

from __future__ import annotations

import numpy as np

__all__ = ["stratified_folds", "task_rng", "train_test_indices"]


def stratified_folds(labels, k=5, seed=0) -> list[np.ndarray]:
    """Test-index arrays of a stratified k-fold split.

    Each class is shuffled, the shuffled classes are concatenated, and rows
    are dealt to folds round-robin with one running counter. Fold sizes then
    differ by at most one and every fold's class counts are within one of
    the global proportion.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)])
    folds = [np.sort(order[i::k]) for i in range(k)]
    if any(len(f) == 0 for f in folds):
        raise ValueError(f"{len(labels)} rows cannot fill {k} folds")
    return folds


def train_test_indices(folds, i):
    test = folds[i]
    train = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
    return train, test


def task_rng(seed, *path) -> np.random.Generator:
    """Independent stream for one task, e.g. ``task_rng(seed, fold, stage)``."""
    return np.random.default_rng([int(seed), *(int(p) for p in path)])
