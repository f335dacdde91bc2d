"""Volume loading, isotropic resampling and nodule tensor construction."""

from .resample import resample, target_dims
from .tensors import (
    AUGMENTATION_TAGS,
    IDENTITY,
    AugmentationTag,
    NoduleTensor,
    augment,
    augment_array,
    build_tensor,
    dataset_shape,
    embed_centered,
)
from .volume import (
    Volume,
    VolumeError,
    list_volume_ids,
    read_labels,
    read_volume,
    write_labels,
    write_volume,
)

__all__ = [
    "AUGMENTATION_TAGS",
    "IDENTITY",
    "AugmentationTag",
    "NoduleTensor",
    "Volume",
    "VolumeError",
    "augment",
    "augment_array",
    "build_tensor",
    "dataset_shape",
    "embed_centered",
    "list_volume_ids",
    "read_labels",
    "read_volume",
    "resample",
    "target_dims",
    "write_labels",
    "write_volume",
]
