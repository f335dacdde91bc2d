"""Volume container and the on-disk raw volume format.

A volume on disk is three files sharing an id::

    <id>.vol.json   {"dims": [nx, ny, nz], "spacing_mm": [sx, sy, sz],
                     "dtype": "f32", "order": "x-fastest"}
    <id>.vol.raw    little-endian float32 intensities
    <id>.mask.raw   uint8 ROI mask (0/1)

In memory, arrays are indexed ``[x, y, z]``; "x-fastest" on disk is Fortran
order of that array.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Volume",
    "VolumeError",
    "read_volume",
    "write_volume",
    "read_labels",
    "write_labels",
    "list_volume_ids",
]


class VolumeError(ValueError):
    """Raised for malformed volumes or volume files."""


@dataclass
class Volume:
    """3D scalar field with voxel spacing and a binary ROI mask.

    Parameters
    ----------
    voxels : ndarray, shape (nx, ny, nz)
        Intensities.
    mask : ndarray, shape (nx, ny, nz)
        Nonzero inside the region of interest.
    spacing : tuple of float
        Voxel size in mm along x, y, z.
    id : str, optional
        Nodule identifier.
    """

    voxels: np.ndarray
    mask: np.ndarray
    spacing: tuple[float, float, float]
    id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels)
        self.mask = np.asarray(self.mask).astype(bool)
        self.spacing = tuple(float(s) for s in self.spacing)
        if self.voxels.ndim != 3:
            raise VolumeError(f"voxels must be 3D, got shape {self.voxels.shape}")
        if self.voxels.shape != self.mask.shape:
            raise VolumeError(
                f"voxels {self.voxels.shape} and mask {self.mask.shape} differ in dims"
            )
        if len(self.spacing) != 3 or not all(s > 0 and np.isfinite(s) for s in self.spacing):
            raise VolumeError(f"spacing components must be positive, got {self.spacing}")
        if not self.mask.any():
            raise VolumeError(f"volume {self.id!r} has an empty ROI mask")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.voxels.shape)

    def roi_bbox(self) -> tuple[tuple[int, int], ...]:
        """Inclusive-exclusive index bounds of the mask per axis."""
        bounds = []
        for axis in range(3):
            other = tuple(a for a in range(3) if a != axis)
            hit = np.flatnonzero(self.mask.any(axis=other))
            bounds.append((int(hit[0]), int(hit[-1]) + 1))
        return tuple(bounds)

    def roi_extent(self) -> tuple[int, int, int]:
        return tuple(hi - lo for lo, hi in self.roi_bbox())

    def crop_to_roi(self, margin: int = 0) -> "Volume":
        """Sub-volume around the ROI bounding box, padded by ``margin`` voxels where available."""
        sl = tuple(
            slice(max(lo - margin, 0), min(hi + margin, n))
            for (lo, hi), n in zip(self.roi_bbox(), self.dims)
        )
        return Volume(self.voxels[sl].copy(), self.mask[sl].copy(), self.spacing, self.id, dict(self.meta))


def _paths(directory: Path, vid: str) -> tuple[Path, Path, Path]:
    return (
        directory / f"{vid}.vol.json",
        directory / f"{vid}.vol.raw",
        directory / f"{vid}.mask.raw",
    )


def write_volume(directory, volume: Volume) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not volume.id:
        raise VolumeError("cannot write a volume without an id")
    meta_path, raw_path, mask_path = _paths(directory, volume.id)
    header = {
        "dims": list(volume.dims),
        "spacing_mm": list(volume.spacing),
        "dtype": "f32",
        "order": "x-fastest",
    }
    meta_path.write_text(json.dumps(header, indent=2) + "\n")
    raw_path.write_bytes(np.asarray(volume.voxels, dtype="<f4").tobytes(order="F"))
    mask_path.write_bytes(volume.mask.astype(np.uint8).tobytes(order="F"))


def read_volume(directory, vid: str) -> Volume:
    directory = Path(directory)
    meta_path, raw_path, mask_path = _paths(directory, vid)
    for p in (meta_path, raw_path, mask_path):
        if not p.exists():
            raise VolumeError(f"missing file for volume {vid!r}: {p.name}")
    header = json.loads(meta_path.read_text())
    if header.get("dtype", "f32") != "f32" or header.get("order", "x-fastest") != "x-fastest":
        raise VolumeError(f"{meta_path.name}: only f32 x-fastest volumes are supported")
    dims = tuple(int(n) for n in header["dims"])
    n = int(np.prod(dims))
    raw = np.frombuffer(raw_path.read_bytes(), dtype="<f4")
    mask = np.frombuffer(mask_path.read_bytes(), dtype=np.uint8)
    if raw.size != n or mask.size != n:
        raise VolumeError(
            f"volume {vid!r}: expected {n} voxels, got {raw.size} intensities and {mask.size} mask bytes"
        )
    if np.any(mask > 1):
        raise VolumeError(f"volume {vid!r}: mask must contain only 0/1")
    voxels = raw.reshape(dims, order="F").astype(np.float32)
    return Volume(voxels, mask.reshape(dims, order="F"), tuple(header["spacing_mm"]), vid)


def list_volume_ids(directory) -> list[str]:
    return sorted(p.name[: -len(".vol.json")] for p in Path(directory).glob("*.vol.json"))


def read_labels(path) -> dict[str, int]:
    """Read an ``id,label`` manifest."""
    labels = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "label"} <= set(reader.fieldnames):
            raise VolumeError(f"{path}: label manifest needs an 'id,label' header")
        for lineno, row in enumerate(reader, start=2):
            try:
                label = int(row["label"])
            except ValueError:
                raise VolumeError(f"{path}:{lineno}: label {row['label']!r} is not 0 or 1") from None
            if label not in (0, 1):
                raise VolumeError(f"{path}:{lineno}: label {label} is not 0 or 1")
            labels[row["id"]] = label
    return labels


def write_labels(path, labels: dict[str, int]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label"])
        for vid in sorted(labels):
            writer.writerow([vid, int(labels[vid])])
