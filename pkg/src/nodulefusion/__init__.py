"""Lung nodule malignancy classification by fusing handcrafted radiomics
features with the output-layer features of a 3D CNN."""

__version__ = "0.1.0"
