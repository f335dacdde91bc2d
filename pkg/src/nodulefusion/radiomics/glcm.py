"""3D gray-level co-occurrence matrices and Haralick-style texture statistics.

Matrices are accumulated symmetrically over masked voxel pairs only and the
texture statistics are averaged over every (levels, distance, direction)
configuration: 5 x 4 x 13 = 260 matrices per volume.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..ingest import Volume

__all__ = [
    "DIRECTIONS",
    "DISTANCES",
    "GRAY_LEVELS",
    "CONFIGURATIONS",
    "TEXTURE_NAMES",
    "Glcm",
    "quantize",
    "build_glcm",
    "glcm_texture",
    "texture_features",
]

# (dx, dy, dz) voxel-index offsets, one per unordered 26-neighbour direction
DIRECTIONS: tuple[tuple[int, int, int], ...] = (
    (0, 1, 0),
    (-1, 1, 0),
    (-1, 0, 0),
    (-1, -1, 0),
    (0, 1, -1),
    (0, 0, -1),
    (0, -1, -1),
    (-1, 0, -1),
    (1, 0, -1),
    (-1, 1, -1),
    (1, -1, -1),
    (-1, -1, -1),
    (1, 1, -1),
)
DISTANCES = (1, 2, 3, 4)
GRAY_LEVELS = (8, 16, 32, 64, 128)
CONFIGURATIONS = tuple(product(GRAY_LEVELS, DISTANCES, DIRECTIONS))

TEXTURE_NAMES = (
    "energy",
    "entropy",
    "correlation",
    "contrast",
    "texture_variance",
    "sum_mean",
    "inertia",
    "cluster_shade",
    "cluster_prominence",
    "homogeneity",
    "max_probability",
    "inverse_variance",
)


@dataclass(frozen=True)
class Glcm:
    levels: int
    distance: int
    direction: tuple[int, int, int]
    counts: np.ndarray  # (levels, levels) int64, symmetric

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def empty(self) -> bool:
        return self.total == 0

    def probabilities(self) -> np.ndarray:
        if self.empty:
            return np.zeros(self.counts.shape)
        return self.counts / float(self.total)


def quantize(values: np.ndarray, mask: np.ndarray, levels: int) -> np.ndarray:
    """Map masked intensities to 1..levels in equal bins over the ROI's [min, max].

    The maximum goes to the top bin; a constant ROI maps entirely to level 1.
    Unmasked voxels get 0.
    """
    values = np.asarray(values, dtype=np.float64)
    inside = values[mask]
    lo, hi = inside.min(), inside.max()
    q = np.zeros(values.shape, dtype=np.int64)
    if hi == lo:
        q[mask] = 1
        return q
    scaled = np.floor((inside - lo) / (hi - lo) * levels).astype(np.int64) + 1
    q[mask] = np.minimum(scaled, levels)
    return q


def _pair_slices(shape, offset):
    src, dst = [], []
    for n, o in zip(shape, offset):
        if abs(o) >= n:
            return None
        if o >= 0:
            src.append(slice(0, n - o))
            dst.append(slice(o, n))
        else:
            src.append(slice(-o, n))
            dst.append(slice(0, n + o))
    return tuple(src), tuple(dst)


def _pair_levels(q: np.ndarray, mask: np.ndarray, offset):
    sl = _pair_slices(q.shape, offset)
    if sl is None:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    src, dst = sl
    valid = mask[src] & mask[dst]
    return q[src][valid] - 1, q[dst][valid] - 1


def _accumulate(a: np.ndarray, b: np.ndarray, levels: int) -> np.ndarray:
    flat = np.bincount(a * levels + b, minlength=levels * levels).reshape(levels, levels)
    return flat + flat.T


def build_glcm(volume: Volume, levels: int, distance: int, direction) -> Glcm:
    """Symmetric co-occurrence counts of one configuration.

    A masked voxel at q pairs with q + distance * direction only if that
    partner is in bounds and masked; each pair adds to (i, j) and (j, i).
    """
    direction = tuple(int(c) for c in direction)
    q = quantize(volume.voxels, volume.mask, levels)
    offset = tuple(distance * c for c in direction)
    a, b = _pair_levels(q, volume.mask, offset)
    return Glcm(levels, distance, direction, _accumulate(a, b, levels))


def glcm_texture(counts: np.ndarray) -> np.ndarray | None:
    """The 12 texture statistics of one count matrix, in ``TEXTURE_NAMES`` order.

    Returns ``None`` for an empty matrix. Only occupied cells are visited;
    levels are numbered from 1.
    """
    counts = np.asarray(counts)
    total = counts.sum()
    if total == 0:
        return None
    L = counts.shape[0]
    ii, jj = np.nonzero(counts)
    p = counts[ii, jj] / float(total)
    i = ii + 1.0
    j = jj + 1.0
    px = np.bincount(ii, weights=p, minlength=L)
    py = np.bincount(jj, weights=p, minlength=L)
    lv = np.arange(1.0, L + 1.0)
    mux = lv @ px
    muy = lv @ py
    sx = np.sqrt(((lv - mux) ** 2) @ px)
    sy = np.sqrt(((lv - muy) ** 2) @ py)
    diff = i - j
    d2 = diff * diff
    centred_sum = i + j - mux - muy
    off = diff != 0
    contrast = d2 @ p
    corr = ((i - mux) * (j - muy)) @ p / (sx * sy) if sx * sy > 0 else 0.0
    return np.array(
        [
            p @ p,
            -(p @ np.log2(p)),
            corr,
            contrast,
            ((i - mux) ** 2) @ p,
            0.5 * ((i + j) @ p),
            contrast,
            (centred_sum**3) @ p,
            (centred_sum**4) @ p,
            (1.0 / (1.0 + np.abs(diff))) @ p,
            p.max(),
            (p[off] / d2[off]).sum(),
        ]
    )


def texture_features(volume: Volume) -> dict[str, float]:
    """Mean of each texture statistic over all 260 configurations.

    Empty matrices are left out of the mean; if every matrix is empty all
    statistics are 0.
    """
    acc = np.zeros(len(TEXTURE_NAMES))
    n_used = 0
    mask = volume.mask
    pairs_by_offset = {}
    for levels in GRAY_LEVELS:
        q = quantize(volume.voxels, mask, levels)
        for distance in DISTANCES:
            for direction in DIRECTIONS:
                offset = tuple(distance * c for c in direction)
                sl = pairs_by_offset.get(offset)
                if sl is None:
                    sl = _pair_slices(q.shape, offset)
                    if sl is not None:
                        src, dst = sl
                        sl = (src, dst, mask[src] & mask[dst])
                    pairs_by_offset[offset] = sl if sl is not None else False
                if not sl:
                    continue
                src, dst, valid = sl
                if not valid.any():
                    continue
                a = q[src][valid] - 1
                b = q[dst][valid] - 1
                stats = glcm_texture(_accumulate(a, b, levels))
                acc += stats
                n_used += 1
    if n_used:
        acc /= n_used
    return dict(zip(TEXTURE_NAMES, acc.tolist()))
