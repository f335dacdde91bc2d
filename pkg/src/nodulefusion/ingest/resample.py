"""Isotropic resampling with separable not-a-knot cubic splines."""

from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import CubicSpline

from .volume import Volume, VolumeError

__all__ = ["resample", "target_dims", "target_coordinates", "spline_resample_axis"]

# guards ceil() against n*s/t landing a hair above an integer
_CEIL_SLACK = 1e-9


def target_dims(dims, spacing, target_spacing: float) -> tuple[int, int, int]:
    return tuple(
        max(1, math.ceil(n * s / target_spacing - _CEIL_SLACK)) for n, s in zip(dims, spacing)
    )


def target_coordinates(n_out: int, target_spacing: float, source_spacing: float) -> np.ndarray:
    """Output sample positions expressed in source index units.

    Voxel 0 of input and output share the same physical position; the last
    output samples may lie up to one target step beyond the last source voxel
    and are extrapolated from the boundary polynomial.
    """
    return np.arange(n_out, dtype=np.float64) * (target_spacing / source_spacing)


def spline_resample_axis(values: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    n = values.shape[axis]
    knots = np.arange(n, dtype=np.float64)
    spline = CubicSpline(knots, values, axis=axis, bc_type="not-a-knot", extrapolate=True)
    out = spline(coords)
    # evaluation exactly on a knot must return the stored sample
    on_knot = np.isclose(coords, np.round(coords), rtol=0, atol=1e-12) & (coords <= n - 1)
    if on_knot.any():
        idx = np.round(coords[on_knot]).astype(int)
        src = np.take(values, idx, axis=axis)
        sel = [slice(None)] * values.ndim
        sel[axis] = np.flatnonzero(on_knot)
        out[tuple(sel)] = src
    return out


def resample(volume: Volume, target_spacing: float) -> Volume:
    """Resample a volume to cubic voxels of side ``target_spacing`` mm.

    Intensities use separable cubic splines (not-a-knot ends); the mask uses
    nearest-neighbour lookup so it stays binary.
    """
    if not target_spacing > 0:
        raise VolumeError(f"target spacing must be positive, got {target_spacing}")
    for axis, n in enumerate(volume.dims):
        if n < 2:
            raise VolumeError(f"cannot spline-resample: axis {'xyz'[axis]} has only {n} voxel(s)")

    new_dims = target_dims(volume.dims, volume.spacing, target_spacing)
    data = np.asarray(volume.voxels, dtype=np.float64)
    mask = volume.mask
    for axis in range(3):
        coords = target_coordinates(new_dims[axis], target_spacing, volume.spacing[axis])
        data = spline_resample_axis(data, coords, axis)
        nearest = np.minimum(np.floor(coords + 0.5).astype(int), volume.dims[axis] - 1)
        mask = np.take(mask, nearest, axis=axis)

    t = float(target_spacing)
    return Volume(data, mask, (t, t, t), volume.id, dict(volume.meta))
