"""Synthetic minority oversampling."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = ["SmoteSamples", "smote", "smote_balance"]


@dataclass(frozen=True)
class SmoteSamples:
    """Synthetic rows with the (base, neighbour, u) triple that produced each."""

    points: np.ndarray
    base: np.ndarray
    neighbor: np.ndarray
    u: np.ndarray


def smote(X, n_synthetic: int, k=5, rng=None, scale=True) -> SmoteSamples:
    """Interpolate ``n_synthetic`` points between minority rows and neighbours.

    Each point is ``x + u * (x_nn - x)`` with ``x`` a uniformly drawn row,
    ``x_nn`` one of its ``k`` nearest other rows (Euclidean; ties to the lower
    index) and ``u ~ U[0, 1]``. With ``scale`` the neighbour search runs on
    z-scored columns so no single unit dominates; interpolation is always in
    the original space. ``k`` is clamped to ``len(X) - 1`` with a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    rng = rng if rng is not None else np.random.default_rng(0)
    n = len(X)
    if n == 0:
        raise ValueError("SMOTE needs at least one minority row")
    if k >= n:
        warnings.warn(f"SMOTE k={k} reduced to {n - 1} for {n} minority rows", RuntimeWarning, stacklevel=2)
        k = n - 1
    if scale and n > 1:
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        Z = (X - X.mean(axis=0)) / sd
    else:
        Z = X
    if k > 0:
        D = cdist(Z, Z, "sqeuclidean")
        np.fill_diagonal(D, np.inf)
        nn = np.argsort(D, axis=1, kind="stable")[:, :k]
    base = rng.integers(0, n, size=n_synthetic)
    if k > 0:
        neighbor = nn[base, rng.integers(0, k, size=n_synthetic)]
    else:
        neighbor = base.copy()
    u = rng.random(n_synthetic)
    points = X[base] + u[:, None] * (X[neighbor] - X[base])
    return SmoteSamples(points, base, neighbor, u)


def smote_balance(X, y, k=5, rng=None, scale=True):
    """Append synthetic minority rows until both classes are equally frequent."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    counts = {c: int(np.sum(y == c)) for c in (0, 1)}
    minority = min(counts, key=lambda c: (counts[c], c))
    need = counts[1 - minority] - counts[minority]
    if need == 0 or counts[minority] == 0:
        return X, y
    syn = smote(X[y == minority], need, k, rng, scale)
    return np.vstack([X, syn.points]), np.r_[y, np.full(need, minority, dtype=y.dtype)]
