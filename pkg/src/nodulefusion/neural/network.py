"""Architecture specs, presets, the network container and its file format."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ops
from .layers import (
    Conv3D,
    Dense,
    Dropout,
    LayerNormReLU,
    MaxPool3D,
    MultiCrop,
    Output,
    layer_from_dict,
    layer_to_dict,
)

__all__ = [
    "ArchitectureError",
    "ArchitectureSpec",
    "Network",
    "PRESETS",
    "preset",
    "load_network",
    "save_network",
    "write_training_log",
]


class ArchitectureError(ValueError):
    """Raised when a layer stack cannot be built for the given input shape."""


@dataclass(frozen=True)
class _Shape:
    channels: int
    dims: tuple | None  # None once flattened to a vector

    @property
    def size(self):
        return self.channels * (math.prod(self.dims) if self.dims else 1)

    def as_tuple(self):
        return (*self.dims, self.channels) if self.dims else (self.channels,)


@dataclass
class ArchitectureSpec:
    name: str
    layers: tuple
    input_shape: tuple
    in_channels: int = 1

    def __post_init__(self):
        self.layers = tuple(self.layers)
        self.input_shape = tuple(int(n) for n in self.input_shape)
        self._infer()

    def _infer(self):
        """Shape inference; records per-layer output shapes and parameter shapes."""
        if not self.layers or not isinstance(self.layers[-1], Output):
            raise ArchitectureError("the last layer must be Output")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ArchitectureError(f"bad input shape {self.input_shape}")
        shape = _Shape(self.in_channels, self.input_shape)
        shapes, params = [], []
        for i, layer in enumerate(self.layers):
            where = f"layer {i} ({layer.kind})"
            if isinstance(layer, Output) and i != len(self.layers) - 1:
                raise ArchitectureError(f"{where}: Output must be last")
            if isinstance(layer, (Conv3D, MaxPool3D, MultiCrop)) and shape.dims is None:
                raise ArchitectureError(f"{where}: needs a 3D feature map, got a vector")
            if isinstance(layer, Conv3D):
                try:
                    dims = ops.conv_output_dims(shape.dims, layer.kernel, layer.stride, layer.padding)
                except ValueError as exc:
                    raise ArchitectureError(f"{where}: {exc}") from None
                if min(dims) < 1:
                    raise ArchitectureError(f"{where}: kernel {layer.kernel} does not fit {shape.dims}")
                params.append((f"{i}.W", (layer.out_channels, shape.channels) + (layer.kernel,) * 3))
                shape = _Shape(layer.out_channels, dims)
            elif isinstance(layer, MaxPool3D):
                shape = _Shape(shape.channels, ops.pool_output_dims(shape.dims, layer.window, layer.stride))
            elif isinstance(layer, MultiCrop):
                if len(layer.crop_fractions) != len(layer.pool_counts):
                    raise ArchitectureError(f"{where}: one pool count per crop fraction")
                try:
                    _, dims = ops.multicrop_geometry(shape.dims, layer.crop_fractions, layer.pool_counts)
                except ValueError as exc:
                    raise ArchitectureError(f"{where}: {exc}") from None
                shape = _Shape(shape.channels * len(layer.crop_fractions), dims)
            elif isinstance(layer, (Dense, Output)):
                params.append((f"{i}.W", (shape.size, layer.units)))
                if isinstance(layer, Output):
                    params.append((f"{i}.b", (layer.units,)))
                shape = _Shape(layer.units, None)
            elif isinstance(layer, LayerNormReLU):
                if shape.size < 2:
                    raise ArchitectureError(f"{where}: layer norm needs at least 2 units")
                params.append((f"{i}.gamma", (shape.channels,)))
                params.append((f"{i}.beta", (shape.channels,)))
            elif not isinstance(layer, Dropout):
                raise ArchitectureError(f"{where}: unknown layer")
            shapes.append(shape)
        self._shapes = shapes
        self._params = params

    @property
    def output_shapes(self) -> list[tuple]:
        """Per-layer output shape, spatial dims first and channels/units last."""
        return [s.as_tuple() for s in self._shapes]

    @property
    def parameter_shapes(self) -> list[tuple[str, tuple]]:
        return list(self._params)

    @property
    def parameter_count(self) -> int:
        return sum(math.prod(s) for _, s in self._params)

    @property
    def ffl_index(self) -> int:
        """Index of the layer whose output is the final hidden dense activation."""
        dense = [i for i, l in enumerate(self.layers) if isinstance(l, Dense)]
        if not dense:
            raise ArchitectureError(f"{self.name} has no hidden dense layer")
        i = dense[-1]
        if i + 1 < len(self.layers) and isinstance(self.layers[i + 1], LayerNormReLU):
            i += 1
        return i

    def with_input_shape(self, shape) -> "ArchitectureSpec":
        return ArchitectureSpec(self.name, self.layers, tuple(shape), self.in_channels)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "in_channels": self.in_channels,
            "layers": [layer_to_dict(l) for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        return cls(d["name"], [layer_from_dict(l) for l in d["layers"]], d["input_shape"], d.get("in_channels", 1))


# ---------------------------------------------------------------- presets


def _ln():
    return LayerNormReLU()


def _alexnet(c=(96, 256, 384, 384, 256), units=4096, first=(11, 4)):
    k, s = first
    return [
        Conv3D(c[0], k, s), _ln(), MaxPool3D(3, 2),
        Conv3D(c[1], 5), _ln(), MaxPool3D(3, 2),
        Conv3D(c[2], 3), _ln(),
        Conv3D(c[3], 3), _ln(),
        Conv3D(c[4], 3), _ln(), MaxPool3D(3, 2),
        Dense(units), _ln(), Dropout(0.9),
        Dense(units), _ln(), Dropout(0.9),
        Output(2),
    ]


def _vgg16(c=(64, 128, 256, 512, 512), units=4096, first=(11, 4)):
    k, s = first
    layers = [Conv3D(c[0], k, s), _ln(), Conv3D(c[0]), _ln(), MaxPool3D(2, 2)]
    for width, depth in zip(c[1:], (2, 3, 3, 3)):
        for _ in range(depth):
            layers += [Conv3D(width), _ln()]
        layers.append(MaxPool3D(2, 2))
    layers += [Dense(units), _ln(), Dropout(0.9), Dense(units), _ln(), Dropout(0.9), Output(2)]
    return layers


def _multicrop(c=64, units=32, first=(11, 4)):
    k, s = first
    return [
        Conv3D(c, k, s), _ln(),
        MultiCrop((1.0, 0.5, 0.25), (2, 1, 0)),
        Conv3D(c, 3), _ln(), MaxPool3D(2, 2),
        Conv3D(c, 3), _ln(), MaxPool3D(2, 2),
        Dense(units), _ln(), Dropout(0.9),
        Output(2),
    ]


FULL_INPUT = (105, 97, 129)
TOY_INPUT = (16, 16, 16)

PRESETS = {
    "alexnet3d": (lambda: _alexnet(), FULL_INPUT),
    "vgg16_3d": (lambda: _vgg16(), FULL_INPUT),
    "multicrop3d": (lambda: _multicrop(), FULL_INPUT),
    "alexnet3d_toy": (lambda: _alexnet((4, 8, 8, 8, 8), 16, (5, 2)), TOY_INPUT),
    "vgg16_3d_toy": (lambda: _vgg16((4, 4, 8, 8, 8), 16, (3, 1)), TOY_INPUT),
    "multicrop3d_toy": (lambda: _multicrop(16, 32, (3, 1)), TOY_INPUT),
}


def preset(name: str, input_shape=None) -> ArchitectureSpec:
    """Build a named preset, optionally for a different input shape."""
    if name not in PRESETS:
        raise KeyError(f"unknown architecture {name!r}; choose from {sorted(PRESETS)}")
    build, default = PRESETS[name]
    return ArchitectureSpec(name, build(), input_shape or default)


# ---------------------------------------------------------------- network


class Network:
    """Parameters plus forward/backward over an :class:`ArchitectureSpec`."""

    def __init__(self, spec: ArchitectureSpec, params=None, *, seed=0, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.log: list[dict] = []
        if params is None:
            params = _init_params(spec, np.random.default_rng(seed))
        self.params = {}
        for name, shape in spec.parameter_shapes:
            p = np.asarray(params[name], dtype=self.dtype)
            if p.shape != shape:
                raise ArchitectureError(f"parameter {name} has shape {p.shape}, expected {shape}")
            self.params[name] = np.ascontiguousarray(p)

    def astype(self, dtype) -> "Network":
        net = Network(self.spec, self.params, dtype=dtype)
        net.log = list(self.log)
        return net

    def copy(self) -> "Network":
        return self.astype(self.dtype)

    def _prepare(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 4:
            x = x[:, None]
        if x.shape[1:] != (self.spec.in_channels, *self.spec.input_shape):
            raise ValueError(f"input shape {x.shape[1:]} does not match {self.spec.input_shape}")
        return x

    def _run(self, x, train=False, rng=None, keep=False, capture=None):
        caches = []
        captured = None
        p = self.params
        for i, layer in enumerate(self.spec.layers):
            if isinstance(layer, Conv3D):
                x, c = ops.conv3d_forward(x, p[f"{i}.W"], layer.stride, layer.padding)
            elif isinstance(layer, MaxPool3D):
                x, c = ops.maxpool3d_forward(x, layer.window, layer.stride)
            elif isinstance(layer, MultiCrop):
                x, c = ops.multicrop_forward(x, layer.crop_fractions, layer.pool_counts)
            elif isinstance(layer, Dense):
                x, c = ops.dense_forward(x, p[f"{i}.W"])
            elif isinstance(layer, Output):
                x, c = ops.dense_forward(x, p[f"{i}.W"], p[f"{i}.b"])
            elif isinstance(layer, LayerNormReLU):
                x, c = ops.layer_norm_relu_forward(x, p[f"{i}.gamma"], p[f"{i}.beta"], layer.eps)
            else:
                x, c = ops.dropout_forward(x, layer.keep_prob, rng, train)
            if keep:
                caches.append(c)
            if i == capture:
                captured = x.reshape(len(x), -1)
        return x, caches, captured

    def _backward(self, grad, caches) -> dict:
        grads = {}
        for i in range(len(self.spec.layers) - 1, -1, -1):
            layer, c = self.spec.layers[i], caches[i]
            if isinstance(layer, Conv3D):
                grad, grads[f"{i}.W"] = ops.conv3d_backward(grad, c)
            elif isinstance(layer, MaxPool3D):
                grad = ops.maxpool3d_backward(grad, c)
            elif isinstance(layer, MultiCrop):
                grad = ops.multicrop_backward(grad, c)
            elif isinstance(layer, Dense):
                grad, grads[f"{i}.W"], _ = ops.dense_backward(grad, c)
            elif isinstance(layer, Output):
                grad, grads[f"{i}.W"], grads[f"{i}.b"] = ops.dense_backward(grad, c)
            elif isinstance(layer, LayerNormReLU):
                grad, grads[f"{i}.gamma"], grads[f"{i}.beta"] = ops.layer_norm_relu_backward(grad, c)
            else:
                grad = ops.dropout_backward(grad, c)
        grads["input"] = grad
        return grads

    def loss_and_grads(self, x, labels, rng=None, train=True):
        """Mean cross-entropy of a batch and its gradient for every parameter.

        The gradient of the input is returned under the key ``"input"``.
        """
        x = self._prepare(x)
        logits, caches, _ = self._run(x, train=train, rng=rng, keep=True)
        loss, dlogits = ops.softmax_cross_entropy(logits, labels)
        return loss, self._backward(dlogits, caches), logits

    def forward(self, x, batch=32, hidden=False):
        """Inference logits (N, 2); with ``hidden`` also the FFL activations."""
        x = self._prepare(x)
        capture = self.spec.ffl_index if hidden else None
        logits, feats = [], []
        for s in range(0, len(x), batch):
            out, _, h = self._run(x[s : s + batch], capture=capture)
            logits.append(out)
            feats.append(h)
        logits = np.concatenate(logits) if logits else np.zeros((0, 2), self.dtype)
        if hidden:
            return logits, np.concatenate(feats)
        return logits

    def predict_proba(self, x):
        return ops.softmax(self.forward(x))

    def output_features(self, x) -> np.ndarray:
        """Pre-softmax logits as (featureN, featureP) columns."""
        return self.forward(x)

    def ffl_features(self, x) -> np.ndarray:
        """Activations of the final hidden dense layer (after its layer norm)."""
        return self.forward(x, hidden=True)[1]


def _init_params(spec: ArchitectureSpec, rng) -> dict:
    """He-uniform on fan-in for weights; gamma 1, beta and biases 0."""
    params = {}
    for name, shape in spec.parameter_shapes:
        kind = name.split(".")[1]
        if kind == "W":
            fan_in = math.prod(shape[1:]) if len(shape) == 5 else shape[0]
            limit = math.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-limit, limit, size=shape)
        elif kind == "gamma":
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


# ---------------------------------------------------------------- file format

_MAGIC = b"NFCNN\x00"
_VERSION = 1


def save_network(path, net: Network) -> None:
    """Versioned container: magic, version, JSON header, little-endian f32 blobs."""
    header = {
        "spec": net.spec.to_dict(),
        "params": [[name, list(shape)] for name, shape in net.spec.parameter_shapes],
        "log": net.log,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _VERSION, len(blob)))
        fh.write(blob)
        for name, _ in net.spec.parameter_shapes:
            fh.write(np.ascontiguousarray(net.params[name], dtype="<f4").tobytes())


def load_network(path) -> Network:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path}: not a network file")
    off = len(_MAGIC)
    version, hlen = struct.unpack_from("<IQ", data, off)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off += struct.calcsize("<IQ")
    header = json.loads(data[off : off + hlen])
    off += hlen
    spec = ArchitectureSpec.from_dict(header["spec"])
    params = {}
    for name, shape in header["params"]:
        n = math.prod(shape)
        params[name] = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape).astype(np.float32)
        off += 4 * n
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes after parameters")
    net = Network(spec, params)
    net.log = header.get("log", [])
    return net


def write_training_log(path, log) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss,lr\n")
        for row in log:
            fh.write(f"{row['epoch']},{row['loss']:.17g},{row['lr']:.17g}\n")
