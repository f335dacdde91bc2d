"""Shape descriptors from the second-moment ellipsoid of the ROI."""

from __future__ import annotations

import math

import numpy as np

from ..ingest import Volume

__all__ = ["GEOMETRY_NAMES", "geometric_features", "principal_moments", "surface_area"]

GEOMETRY_NAMES = (
    "volume",
    "major_diameter",
    "minor_diameter",
    "eccentricity",
    "elongation",
    "orientation",
    "bounding_box_volume",
    "perimeter",
)

# relative eigenvalue gap below which the ellipsoid is treated as a sphere
_ISOTROPIC_RTOL = 1e-12


def principal_moments(mask: np.ndarray, spacing) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors (columns) of the population
    covariance of masked voxel-centre coordinates in mm."""
    pts = np.argwhere(mask) * np.asarray(spacing, dtype=np.float64)
    centred = pts - pts.mean(axis=0)
    cov = centred.T @ centred / len(pts)
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    return np.clip(w[order], 0.0, None), v[:, order]


def surface_area(mask: np.ndarray, spacing) -> float:
    """Area of voxel faces separating the ROI from non-ROI or the outside."""
    sx, sy, sz = spacing
    face_area = (sy * sz, sx * sz, sx * sy)
    padded = np.pad(mask.astype(np.int8), 1)
    area = 0.0
    for axis in range(3):
        exposed = np.count_nonzero(np.diff(padded, axis=axis))
        area += exposed * face_area[axis]
    return area


def geometric_features(volume: Volume) -> dict[str, float]:
    """Volume, ellipsoid diameters/ratios, orientation, bounding box and surface.

    Diameters are 4 * sqrt(eigenvalue). Orientation is the angle in degrees
    between the major axis and z. A single voxel has zero eigenvalues and
    reports diameters 0, eccentricity 0 and elongation 1. For linear or
    planar ROIs the smallest eigenvalue is floored at the second moment of
    one voxel, s_min^2 / 12, when forming the elongation so it stays finite.
    """
    mask = volume.mask
    spacing = volume.spacing
    n = int(np.count_nonzero(mask))
    voxel_mm3 = spacing[0] * spacing[1] * spacing[2]

    w, v = principal_moments(mask, spacing)
    l1, l3 = float(w[0]), float(w[2])
    if l1 == 0.0:
        ecc, elong, orient = 0.0, 1.0, 0.0
    else:
        gap = (l1 - l3) / l1
        ecc = 0.0 if gap < _ISOTROPIC_RTOL else math.sqrt(gap)
        floor = min(spacing) ** 2 / 12.0
        elong = math.sqrt(l1 / max(l3, floor))
        orient = math.degrees(math.acos(min(1.0, abs(float(v[2, 0])))))

    idx = np.argwhere(mask)
    extent = idx.max(axis=0) - idx.min(axis=0) + 1
    return {
        "volume": n * voxel_mm3,
        "major_diameter": 4.0 * math.sqrt(l1),
        "minor_diameter": 4.0 * math.sqrt(l3),
        "eccentricity": ecc,
        "elongation": elong,
        "orientation": orient,
        "bounding_box_volume": float(np.prod(extent * np.asarray(spacing))),
        "perimeter": surface_area(mask, spacing),
    }
