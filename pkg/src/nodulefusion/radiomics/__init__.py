"""Handcrafted radiomics features: 9 intensity, 8 geometric, 12 GLCM texture."""

from .features import (
    CNN_OUTPUT_NAMES,
    HANDCRAFTED_NAMES,
    FeatureTable,
    handcrafted,
    read_feature_table,
    write_feature_table,
)
from .geometry import GEOMETRY_NAMES, geometric_features
from .glcm import (
    CONFIGURATIONS,
    DIRECTIONS,
    DISTANCES,
    GRAY_LEVELS,
    TEXTURE_NAMES,
    Glcm,
    build_glcm,
    glcm_texture,
    quantize,
    texture_features,
)
from .intensity import INTENSITY_NAMES, intensity_features, intensity_stats

__all__ = [
    "CNN_OUTPUT_NAMES",
    "CONFIGURATIONS",
    "DIRECTIONS",
    "DISTANCES",
    "FeatureTable",
    "GEOMETRY_NAMES",
    "GRAY_LEVELS",
    "Glcm",
    "HANDCRAFTED_NAMES",
    "INTENSITY_NAMES",
    "TEXTURE_NAMES",
    "build_glcm",
    "geometric_features",
    "glcm_texture",
    "handcrafted",
    "intensity_features",
    "intensity_stats",
    "quantize",
    "read_feature_table",
    "texture_features",
    "write_feature_table",
]
