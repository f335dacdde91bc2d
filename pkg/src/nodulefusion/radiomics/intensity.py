"""First-order intensity statistics over the ROI."""

from __future__ import annotations

import numpy as np

from ..ingest import Volume, VolumeError

__all__ = ["INTENSITY_NAMES", "intensity_features", "intensity_stats"]

INTENSITY_NAMES = (
    "minimum",
    "maximum",
    "mean",
    "stand_deviation",
    "sum",
    "median",
    "skewness",
    "kurtosis",
    "variance",
)


def intensity_stats(values) -> dict[str, float]:
    """Nine histogram statistics of a 1D sample.

    Variance and standard deviation use the N-1 denominator (0 for a single
    value). Skewness m3/m2^1.5 and excess kurtosis m4/m2^2 - 3 use population
    central moments; both are 0 when the sample has no spread.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise VolumeError("intensity features need at least one ROI voxel")
    n = x.size
    lo, hi = x.min(), x.max()
    mean = x.mean()
    if hi == lo:
        var = skew = kurt = 0.0
    else:
        dev = x - mean
        m2 = np.mean(dev**2)
        m3 = np.mean(dev**3)
        m4 = np.mean(dev**4)
        var = float(np.sum(dev**2) / (n - 1)) if n > 1 else 0.0
        skew = float(m3 / m2**1.5)
        kurt = float(m4 / m2**2 - 3.0)
    return {
        "minimum": float(lo),
        "maximum": float(hi),
        "mean": float(mean),
        "stand_deviation": float(np.sqrt(var)),
        "sum": float(x.sum()),
        "median": float(np.median(x)),
        "skewness": skew,
        "kurtosis": kurt,
        "variance": var,
    }


def intensity_features(volume: Volume) -> dict[str, float]:
    return intensity_stats(np.asarray(volume.voxels)[volume.mask])
