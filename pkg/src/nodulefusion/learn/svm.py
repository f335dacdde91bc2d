"""RBF support vector machine trained by sequential minimal optimisation."""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "SvmModel",
    "default_gamma",
    "dual_objective",
    "kkt_violation",
    "load_svm",
    "rbf_kernel",
    "save_svm",
    "smo_solve",
    "sq_distances",
    "svm_score",
    "svm_train",
]

_TAU = 1e-12


@numba.njit(cache=True)
def _smo(K, y, C, tol, max_iter):
    """Solve min 0.5 a'Qa - e'a, 0 <= a <= C, y'a = 0 with Q = yy'K.

    Working pairs use second-order selection. Returns (alpha, rho, iters);
    the decision function is sum_i a_i y_i K(x_i, x) - rho.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while it < max_iter:
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * G[t]
                if v < gmin:
                    gmin = v
                if i >= 0:
                    b = gmax - v
                    if b > 0:
                        a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if a <= 0:
                            a = _TAU
                        score = -(b * b) / a
                        if score < best:
                            best = score
                            j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        it += 1

        yi = y[i]
        yj = y[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = _TAU
        ai_old = alpha[i]
        aj_old = alpha[j]
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        di = alpha[i] - ai_old
        dj = alpha[j] - aj_old
        for t in range(n):
            G[t] += y[t] * (yi * K[t, i] * di + yj * K[t, j] * dj)

    # rho from free vectors, else the midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    s = 0.0
    nfree = 0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            s += yg
    rho = s / nfree if nfree > 0 else (ub + lb) / 2.0
    return alpha, rho, it


def smo_solve(K, y, C=1.0, tol=1e-6, max_iter=None):
    """Dual coefficients and offset for a precomputed kernel.

    Parameters
    ----------
    K : (n, n) kernel matrix
    y : labels in {-1, +1}
    C : box constraint
    tol : stop when the maximal violating pair gap falls below ``tol``

    Returns
    -------
    alpha : (n,) ndarray
    b : float
        Bias of ``f(x) = sum_i alpha_i y_i K(x_i, x) + b``.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if max_iter is None:
        max_iter = max(10_000_000, 100 * n)
    alpha, rho, it = _smo(K, y, float(C), float(tol), int(max_iter))
    if it >= max_iter:
        warnings.warn(f"SMO stopped at the iteration cap {max_iter}", RuntimeWarning, stacklevel=2)
    return alpha, -rho


def dual_objective(alpha, K, y) -> float:
    """sum(alpha) - 0.5 * sum_ij alpha_i alpha_j y_i y_j K_ij (to maximise)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def kkt_violation(alpha, b, K, y, C) -> float:
    """Largest violation of the soft-margin KKT conditions."""
    m = y * (K @ (alpha * y) + b)
    free = (alpha > 0) & (alpha < C)
    viol = np.zeros_like(m)
    viol[alpha <= 0] = np.maximum(0.0, 1.0 - m[alpha <= 0])
    viol[alpha >= C] = np.maximum(0.0, m[alpha >= C] - 1.0)
    viol[free] = np.abs(m[free] - 1.0)
    return float(viol.max(initial=0.0))


def sq_distances(A, B) -> np.ndarray:
    return cdist(np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64), "sqeuclidean")


def rbf_kernel(A, B, gamma) -> np.ndarray:
    return np.exp(-gamma * sq_distances(A, B))


def default_gamma(D2) -> float:
    """1 / median pairwise squared distance (off-diagonal), 1 if degenerate."""
    n = D2.shape[0]
    iu = np.triu_indices(n, 1)
    med = float(np.median(D2[iu])) if n > 1 else 0.0
    return 1.0 / med if med > 0 else 1.0


@dataclass
class SvmModel:
    support: np.ndarray  # standardized support vectors
    coef: np.ndarray  # alpha_i * y_i
    b: float
    gamma: float
    C: float
    mean: np.ndarray
    std: np.ndarray

    def standardize(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        if len(self.coef) == 0:
            return np.full(len(X), self.b)
        return rbf_kernel(self.standardize(X), self.support, self.gamma) @ self.coef + self.b


def _check_finite(X):
    bad = np.argwhere(~np.isfinite(X))
    if len(bad):
        r, c = bad[0]
        raise ValueError(f"non-finite feature value at row {r}, column {c}")


def svm_train(X, labels, C=1.0, gamma=None, standardize=True, tol=1e-6, gamma_scale=1.0) -> SvmModel:
    """Fit an RBF SVM.

    Parameters
    ----------
    X : (n, d) features
    labels : 0/1 labels
    C : box constraint
    gamma : RBF width; ``None`` selects ``gamma_scale * default_gamma`` of
        the standardized training rows
    standardize : z-score features with training statistics first
    tol : SMO stopping gap
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2D array")
    labels = np.asarray(labels)
    if len(np.unique(labels)) != 2 or not set(np.unique(labels)) <= {0, 1}:
        raise ValueError("SVM training needs 0/1 labels from both classes")
    _check_finite(X)
    y = np.where(labels == 1, 1.0, -1.0)
    d = X.shape[1]
    if standardize:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
    else:
        mean, std = np.zeros(d), np.ones(d)
    Z = (X - mean) / std
    D2 = sq_distances(Z, Z)
    if gamma is None:
        gamma = default_gamma(D2) * gamma_scale
    K = np.exp(-gamma * D2)
    alpha, b = smo_solve(K, y, C, tol)
    sv = alpha > 0
    return SvmModel(Z[sv], alpha[sv] * y[sv], float(b), float(gamma), float(C), mean, std)


def svm_score(model: SvmModel, X) -> np.ndarray:
    """Decision values; a single row gives a length-1 array."""
    return model.decision(X)


def save_svm(path, model: SvmModel) -> None:
    """JSON header then little-endian f64 blobs: support, coef."""
    header = {
        "C": model.C,
        "gamma": model.gamma,
        "b": model.b,
        "mean": model.mean.tolist(),
        "std": model.std.tolist(),
        "n_support": int(len(model.coef)),
        "n_features": int(len(model.mean)),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(model.support, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.coef, dtype="<f8").tobytes())


def load_svm(path) -> SvmModel:
    data = Path(path).read_bytes()
    (hlen,) = struct.unpack_from("<Q", data, 0)
    h = json.loads(data[8 : 8 + hlen])
    n, d = h["n_support"], h["n_features"]
    off = 8 + hlen
    support = np.frombuffer(data, "<f8", n * d, off).reshape(n, d).copy()
    coef = np.frombuffer(data, "<f8", n, off + 8 * n * d).copy()
    return SvmModel(support, coef, h["b"], h["gamma"], h["C"], np.array(h["mean"]), np.array(h["std"]))
