"""A small numpy 3D CNN: layers, presets, training and feature extraction."""

from .layers import Conv3D, Dense, Dropout, LayerNormReLU, MaxPool3D, MultiCrop, Output
from .network import (
    PRESETS,
    ArchitectureError,
    ArchitectureSpec,
    Network,
    load_network,
    preset,
    save_network,
    write_training_log,
)
from .ops import softmax, softmax_cross_entropy
from .training import TrainConfig, TrainingDiverged, balanced_batches, learning_rate, train

__all__ = [
    "Conv3D",
    "Dense",
    "Dropout",
    "LayerNormReLU",
    "MaxPool3D",
    "MultiCrop",
    "Output",
    "PRESETS",
    "ArchitectureError",
    "ArchitectureSpec",
    "Network",
    "load_network",
    "preset",
    "save_network",
    "write_training_log",
    "softmax",
    "softmax_cross_entropy",
    "TrainConfig",
    "TrainingDiverged",
    "balanced_batches",
    "learning_rate",
    "train",
]
