"""The 29 handcrafted features and the feature-table CSV format."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..ingest import Volume
from .geometry import GEOMETRY_NAMES, geometric_features
from .glcm import TEXTURE_NAMES, texture_features
from .intensity import INTENSITY_NAMES, intensity_features

__all__ = [
    "HANDCRAFTED_NAMES",
    "CNN_OUTPUT_NAMES",
    "FeatureTable",
    "handcrafted",
    "read_feature_table",
    "write_feature_table",
]

HANDCRAFTED_NAMES: tuple[str, ...] = INTENSITY_NAMES + GEOMETRY_NAMES + TEXTURE_NAMES
CNN_OUTPUT_NAMES = ("cnn_featurep", "cnn_featuren")


def handcrafted(volume: Volume) -> dict[str, float]:
    """Intensity, geometric and texture features in stable order (29 values)."""
    out = {}
    out.update(intensity_features(volume))
    out.update(geometric_features(volume))
    out.update(texture_features(volume))
    return {name: out[name] for name in HANDCRAFTED_NAMES}


@dataclass
class FeatureTable:
    """Rows are nodules; columns are named features plus a 0/1 label."""

    ids: list[str]
    labels: np.ndarray
    names: list[str]
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.names = list(self.names)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.ids), len(self.names))
        if len(self.labels) != len(self.ids):
            raise ValueError("labels and ids differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate feature names")

    def __len__(self):
        return len(self.ids)

    def columns(self, names) -> "FeatureTable":
        idx = [self.names.index(n) for n in names]
        return FeatureTable(self.ids, self.labels, list(names), self.values[:, idx])

    def rows(self, index) -> "FeatureTable":
        index = np.asarray(index)
        return FeatureTable([self.ids[i] for i in index], self.labels[index], self.names, self.values[index])

    def hstack(self, other: "FeatureTable") -> "FeatureTable":
        if other.ids != self.ids:
            raise ValueError("cannot join feature tables with different row ids")
        return FeatureTable(self.ids, self.labels, self.names + other.names, np.hstack([self.values, other.values]))

    @classmethod
    def from_dicts(cls, ids, labels, rows: list[dict]) -> "FeatureTable":
        names = list(rows[0]) if rows else []
        return cls(ids, labels, names, np.array([[r[n] for n in names] for r in rows], dtype=np.float64))


def write_feature_table(path, table: FeatureTable) -> None:
    """CSV with header ``id,label,<names>``; values at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", *table.names])
        for vid, label, row in zip(table.ids, table.labels, table.values):
            w.writerow([vid, int(label), *(format(float(x), ".17g") for x in row)])


def read_feature_table(path) -> FeatureTable:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["id", "label"]:
            raise ValueError(f"{path}: feature table must start with 'id,label'")
        ids, labels, values = [], [], []
        for row in reader:
            ids.append(row[0])
            labels.append(int(row[1]))
            values.append([float(x) for x in row[2:]])
    return FeatureTable(ids, labels, header[2:], np.array(values, dtype=np.float64).reshape(len(ids), len(header) - 2))
