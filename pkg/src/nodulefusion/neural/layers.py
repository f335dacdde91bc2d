"""Declarative layer specifications.

Each spec is a frozen dataclass; ``kind`` names it in serialized headers.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

__all__ = [
    "Conv3D",
    "MaxPool3D",
    "MultiCrop",
    "Dense",
    "LayerNormReLU",
    "Dropout",
    "Output",
    "LAYER_KINDS",
    "layer_to_dict",
    "layer_from_dict",
]


@dataclass(frozen=True)
class Conv3D:
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: str = "same"
    kind = "conv3d"


@dataclass(frozen=True)
class MaxPool3D:
    window: int = 2
    stride: int = 2
    kind = "maxpool3d"


@dataclass(frozen=True)
class MultiCrop:
    crop_fractions: tuple = (1.0, 0.5, 0.25)
    pool_counts: tuple = (2, 1, 0)
    kind = "multicrop"


@dataclass(frozen=True)
class Dense:
    units: int
    kind = "dense"


@dataclass(frozen=True)
class LayerNormReLU:
    eps: float = 1e-5
    kind = "layernorm_relu"


@dataclass(frozen=True)
class Dropout:
    keep_prob: float = 0.9
    kind = "dropout"


@dataclass(frozen=True)
class Output:
    units: int = 2
    kind = "output"


LAYER_KINDS = {cls.kind: cls for cls in (Conv3D, MaxPool3D, MultiCrop, Dense, LayerNormReLU, Dropout, Output)}


def layer_to_dict(layer) -> dict:
    d = asdict(layer)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return {"kind": layer.kind, **d}


def layer_from_dict(d: dict):
    d = dict(d)
    cls = LAYER_KINDS[d.pop("kind")]
    kwargs = {}
    for f in fields(cls):
        if f.name in d:
            v = d[f.name]
            kwargs[f.name] = tuple(v) if isinstance(v, list) else v
    return cls(**kwargs)
