"""Seeded two-class synthetic nodule cohort.

Class 1 nodules are larger, rounder-edged ellipsoids with stronger, coarser
internal texture; class 0 nodules are smaller and more homogeneous. Size
ranges overlap so the classes are separable but not trivially so. Scans
have anisotropic spacing (fine in-plane, coarse along z) like CT.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial.transform import Rotation

from .ingest import Volume, write_labels, write_volume

__all__ = ["SynthParams", "make_nodule", "make_cohort", "write_cohort"]


@dataclass(frozen=True)
class SynthParams:
    positive_fraction: float = 431 / 1226
    radius_mm: tuple = ((2.5, 4.5), (4.0, 6.5))  # per class (low, high)
    texture_sd: tuple = (25.0, 70.0)
    texture_scale_mm: tuple = (0.8, 1.6)
    mean_hu: tuple = (20.0, 45.0)
    background_hu: float = -750.0
    noise_sd: float = 15.0
    inplane_mm: tuple = (0.6, 0.9)
    slice_mm: tuple = (1.0, 2.0)
    margin_mm: float = 4.0


def make_nodule(rng, label: int, vid: str, p: SynthParams = SynthParams()) -> Volume:
    """One ellipsoidal nodule with random size, orientation, texture and spacing."""
    lo, hi = p.radius_mm[label]
    r = rng.uniform(lo, hi)
    axes = r * rng.uniform(0.8, 1.2, size=3)
    rot = Rotation.random(random_state=rng).as_matrix()
    s_xy = rng.uniform(*p.inplane_mm)
    spacing = (s_xy, s_xy, rng.uniform(*p.slice_mm))
    half = axes.max() + p.margin_mm
    dims = [int(math.ceil(2 * half / s)) + 1 for s in spacing]
    grid = np.stack(
        np.meshgrid(*[(np.arange(n) - (n - 1) / 2) * s for n, s in zip(dims, spacing)], indexing="ij"),
        axis=-1,
    )
    local = grid @ rot  # coordinates in the ellipsoid frame
    rho = np.sqrt(np.sum((local / axes) ** 2, axis=-1))
    mask = rho <= 1.0
    if not mask.any():
        mask[tuple(n // 2 for n in dims)] = True

    sigma = [p.texture_scale_mm[label] / s for s in spacing]
    tex = gaussian_filter(rng.standard_normal(dims), sigma)
    tex *= p.texture_sd[label] / max(tex.std(), 1e-12)
    # soft edge: intensity falls towards the boundary
    profile = np.clip(1.2 - 0.4 * rho, 0.0, 1.0)
    nodule = p.mean_hu[label] + tex
    voxels = np.where(rho <= 1.3, p.background_hu + profile * (nodule - p.background_hu), p.background_hu)
    voxels = voxels + p.noise_sd * rng.standard_normal(dims)
    return Volume(voxels.astype(np.float32), mask, spacing, vid, {"label": label, "radius_mm": float(r)})


def make_cohort(count: int, seed: int, p: SynthParams = SynthParams()):
    """``count`` nodules with ids ``syn0000``...; class 1 gets round(count * fraction)."""
    rng = np.random.default_rng(seed)
    n_pos = int(round(count * p.positive_fraction))
    labels = np.r_[np.ones(n_pos, int), np.zeros(count - n_pos, int)]
    labels = rng.permutation(labels)
    vols = [make_nodule(rng, int(y), f"syn{i:04d}", p) for i, y in enumerate(labels)]
    return vols, labels


def write_cohort(out, count: int = 200, seed: int = 7, p: SynthParams = SynthParams()) -> Path:
    """Write volumes, ``labels.csv`` and ``manifest.json`` under ``out``."""
    out = Path(out)
    vols, labels = make_cohort(count, seed, p)
    vdir = out / "volumes"
    for v in vols:
        write_volume(vdir, v)
    write_labels(out / "labels.csv", {v.id: int(y) for v, y in zip(vols, labels)})
    manifest = {
        "count": count,
        "seed": seed,
        "params": asdict(p),
        "volumes": "volumes",
        "labels": "labels.csv",
        "ids": [v.id for v in vols],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out
