"""Fixed-size nodule tensors and lossless rotation/flip augmentation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .volume import Volume, VolumeError

__all__ = [
    "AugmentationTag",
    "NoduleTensor",
    "IDENTITY",
    "AUGMENTATION_TAGS",
    "augment_array",
    "augment",
    "build_tensor",
    "dataset_shape",
    "embed_centered",
]

# in-plane rotation axes for a rotation about x, y, z (np.rot90 `axes`)
_ROTATION_PLANES = {"x": (1, 2), "y": (2, 0), "z": (0, 1)}
# flipping across a coordinate plane reverses the axis normal to it
_FLIP_AXIS = {"yz": 0, "xz": 1, "xy": 2}


class AugmentationTag(NamedTuple):
    kind: str  # "identity" | "rotation" | "flip"
    axis: str = ""  # rotation axis or flip plane
    angle: int = 0

    def __str__(self):
        if self.kind == "identity":
            return "identity"
        if self.kind == "rotation":
            return f"rot{self.axis}{self.angle}"
        return f"flip{self.axis}"

    @classmethod
    def parse(cls, text: str) -> "AugmentationTag":
        if text == "identity":
            return IDENTITY
        if text.startswith("rot"):
            return cls("rotation", text[3], int(text[4:]))
        if text.startswith("flip"):
            return cls("flip", text[4:])
        raise ValueError(f"unknown augmentation tag {text!r}")


IDENTITY = AugmentationTag("identity")
AUGMENTATION_TAGS: tuple[AugmentationTag, ...] = (
    IDENTITY,
    *(AugmentationTag("rotation", ax, ang) for ax in "xyz" for ang in (90, 180, 270)),
    *(AugmentationTag("flip", plane) for plane in ("xy", "yz", "xz")),
)


def augment_array(arr: np.ndarray, tag: AugmentationTag) -> np.ndarray:
    """Apply one augmentation to a 3D array by index permutation/reversal only."""
    if tag.kind == "identity":
        return arr.copy()
    if tag.kind == "rotation":
        return np.ascontiguousarray(np.rot90(arr, tag.angle // 90, axes=_ROTATION_PLANES[tag.axis]))
    if tag.kind == "flip":
        return np.ascontiguousarray(np.flip(arr, axis=_FLIP_AXIS[tag.axis]))
    raise ValueError(f"unknown augmentation kind {tag.kind!r}")


@dataclass
class NoduleTensor:
    """Fixed-shape CNN input.

    ``footprint`` marks the embedded ROI voxels for segmented tensors and is
    ``None`` for unsegmented patches.
    """

    values: np.ndarray
    label: int
    nodule_id: str = ""
    tag: AugmentationTag = IDENTITY
    footprint: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)


def _bbox(mask: np.ndarray) -> tuple[slice, ...]:
    sl = []
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        hit = np.flatnonzero(mask.any(axis=other))
        sl.append(slice(int(hit[0]), int(hit[-1]) + 1))
    return tuple(sl)


def embed_centered(values: np.ndarray, mask: np.ndarray, shape) -> tuple[np.ndarray, np.ndarray]:
    """Place the ROI bounding box of ``mask`` at offset floor((T - S) / 2), zeroing non-ROI voxels."""
    box = _bbox(mask)
    crop_v = values[box]
    crop_m = mask[box]
    out = np.zeros(shape, dtype=np.float32)
    fp = np.zeros(shape, dtype=bool)
    start = []
    for axis, (size, target) in enumerate(zip(crop_v.shape, shape)):
        if size > target:
            raise VolumeError(
                f"ROI extent {size} along axis {'xyz'[axis]} exceeds tensor size {target}"
            )
        start.append((target - size) // 2)
    dest = tuple(slice(s, s + n) for s, n in zip(start, crop_v.shape))
    out[dest] = np.where(crop_m, crop_v, 0)
    fp[dest] = crop_m
    return out, fp


def build_tensor(volume: Volume, shape, mode: str = "segmented", label: int = 0) -> NoduleTensor:
    """Embed a volume's nodule into a tensor of the given shape.

    ``segmented`` keeps only ROI voxels, centred by bounding box.
    ``patch`` copies a window of ``shape`` centred on the ROI centroid,
    leaving non-ROI intensities intact and zero-filling outside the volume.
    """
    shape = tuple(int(n) for n in shape)
    if mode == "segmented":
        values, fp = embed_centered(volume.voxels, volume.mask, shape)
        return NoduleTensor(values, label, volume.id, IDENTITY, fp)
    if mode == "patch":
        centroid = np.argwhere(volume.mask).mean(axis=0)
        out = np.zeros(shape, dtype=np.float32)
        src, dst = [], []
        for c, t, n in zip(centroid, shape, volume.dims):
            lo = int(np.floor(c + 0.5)) - t // 2
            s0, s1 = max(lo, 0), min(lo + t, n)
            if s1 <= s0:
                src.append(slice(0, 0))
                dst.append(slice(0, 0))
                continue
            src.append(slice(s0, s1))
            dst.append(slice(s0 - lo, s1 - lo))
        out[tuple(dst)] = volume.voxels[tuple(src)]
        return NoduleTensor(out, label, volume.id, IDENTITY, None)
    raise ValueError(f"unknown tensor mode {mode!r}; expected 'segmented' or 'patch'")


def dataset_shape(volumes) -> tuple[int, int, int]:
    """Per-axis maximum ROI extent over all volumes and all augmentations."""
    volumes = list(volumes)
    if not volumes:
        raise ValueError("dataset_shape needs at least one volume")
    best = [0, 0, 0]
    for v in volumes:
        ext = v.roi_extent()
        for tag in AUGMENTATION_TAGS:
            for axis, n in enumerate(_augmented_extent(ext, tag)):
                best[axis] = max(best[axis], n)
    return tuple(best)


def _augmented_extent(ext, tag: AugmentationTag):
    ext = list(ext)
    if tag.kind == "rotation" and tag.angle in (90, 270):
        a, b = _ROTATION_PLANES[tag.axis]
        ext[a], ext[b] = ext[b], ext[a]
    return ext


def augment(t: NoduleTensor) -> list[NoduleTensor]:
    """Return the 13 augmented copies of a tensor (identity first).

    Segmented tensors are re-centred after rotation so every copy keeps the
    original tensor shape; patches must be cubic for rotations to fit.
    """
    out = []
    for tag in AUGMENTATION_TAGS:
        values = augment_array(t.values, tag)
        if t.footprint is not None:
            fp = augment_array(t.footprint, tag)
            values, fp = embed_centered(values, fp, t.shape)
        else:
            fp = None
            if values.shape != t.shape:
                raise VolumeError(
                    f"augmentation {tag} changes patch shape {t.shape} -> {values.shape}"
                )
        out.append(replace(t, values=values, footprint=fp, tag=tag))
    return out
