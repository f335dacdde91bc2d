"""Experiment configuration: schema, validation and the config hash.

A config is a YAML or JSON mapping::

    data:
      volumes: path/to/volumes        # directory of <id>.vol.json/.vol.raw/.mask.raw
      labels: path/to/labels.csv      # id,label
    target_spacing: 0.5               # mm, isotropic resampling
    tensor_shape: auto                # or [x, y, z]
    patch_size: 32                    # cubic patch side for ori-multicrop
    architecture: multicrop3d         # neural preset name
    train: {batch_size: 70, max_epochs: 100, stop_loss: 0.01, keep_prob: 0.9,
            lr_schedule: [[1, 0.005], [2, 0.001], [5, 0.0005], [9, 0.0001]]}
    pipeline: ss-olhf                 # ss-olhf | ss-hf | s-ffl | s-fflhf | ori-multicrop
    train_once: false                 # one CNN on all nodules (leaks test folds)
    learn: {C: 1.0, gamma_scale: 1.0, grid: false, sfs_threshold: 1.0e-6,
            smote_k: 5, min_runs: 4, inner_folds: 5, relieff_k: 10, relieff_top: null,
            empty_consensus: plurality}   # or constant (score 0 for every test row)
    eval: {folds: 5, seed: 0}
    out: runs
    workers: 1

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .neural import PRESETS
from .neural.training import DEFAULT_SCHEDULE

__all__ = [
    "CNN_PIPELINES",
    "ConfigError",
    "DEFAULTS",
    "PIPELINES",
    "config_hash",
    "load_config",
    "resolve_config",
    "validate_config",
]

PIPELINES = ("ss-olhf", "ss-hf", "s-ffl", "s-fflhf", "ori-multicrop")
CNN_PIPELINES = ("ss-olhf", "s-ffl", "s-fflhf", "ori-multicrop")

DEFAULTS = {
    "data": {"volumes": None, "labels": None},
    "target_spacing": 0.5,
    "tensor_shape": "auto",
    "patch_size": 32,
    "architecture": "multicrop3d",
    "train": {
        "batch_size": 70,
        "max_epochs": 100,
        "stop_loss": 0.01,
        "keep_prob": 0.9,
        "lr_schedule": [list(p) for p in DEFAULT_SCHEDULE],
    },
    "pipeline": "ss-olhf",
    "train_once": False,
    "learn": {
        "C": 1.0,
        "gamma_scale": 1.0,
        "grid": False,
        "sfs_threshold": 1e-6,
        "smote_k": 5,
        "min_runs": 4,
        "inner_folds": 5,
        "relieff_k": 10,
        "relieff_top": None,
        "empty_consensus": "plurality",
    },
    "eval": {"folds": 5, "seed": 0},
    "out": "runs",
    "workers": 1,
}

# fields that do not change results and so stay out of the hash
_UNHASHED = ("out", "workers")


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config field {path + k!r}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def resolve_config(raw: dict | None = None, base_dir=".") -> dict:
    """Fill defaults and resolve data paths against ``base_dir``."""
    cfg = _merge(DEFAULTS, raw or {})
    base = Path(base_dir)
    for key in ("volumes", "labels"):
        p = cfg["data"][key]
        if p is not None:
            cfg["data"][key] = str((base / p).resolve()) if not Path(p).is_absolute() else str(p)
    if not Path(cfg["out"]).is_absolute():
        cfg["out"] = str((base / cfg["out"]).resolve())
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return resolve_config(raw, path.parent)


def validate_config(cfg: dict, need_data=True) -> dict:
    """Raise :class:`ConfigError` listing every problem found."""
    errors = []
    if need_data:
        for key in ("volumes", "labels"):
            p = cfg["data"][key]
            if p is None:
                errors.append(f"data.{key} is required")
            elif not Path(p).exists():
                errors.append(f"data.{key}: {p} does not exist")
    if cfg["pipeline"] not in PIPELINES:
        errors.append(f"pipeline {cfg['pipeline']!r} is not one of {', '.join(PIPELINES)}")
    if cfg["pipeline"] in CNN_PIPELINES and cfg["architecture"] not in PRESETS:
        errors.append(f"architecture {cfg['architecture']!r} is not one of {', '.join(sorted(PRESETS))}")
    if not cfg["target_spacing"] or cfg["target_spacing"] <= 0:
        errors.append("target_spacing must be positive")
    ts = cfg["tensor_shape"]
    if ts != "auto" and not (isinstance(ts, (list, tuple)) and len(ts) == 3 and all(int(n) > 0 for n in ts)):
        errors.append("tensor_shape must be 'auto' or three positive integers")
    if int(cfg["eval"]["folds"]) < 2:
        errors.append("eval.folds must be at least 2")
    if int(cfg["train"]["batch_size"]) < 2:
        errors.append("train.batch_size must be at least 2")
    if any(float(r) <= 0 for _, r in cfg["train"]["lr_schedule"]):
        errors.append("train.lr_schedule rates must be positive")
    if cfg["learn"]["empty_consensus"] not in ("plurality", "constant"):
        errors.append("learn.empty_consensus must be 'plurality' or 'constant'")
    if errors:
        raise ConfigError("; ".join(errors))
    return cfg


def _fingerprint(path) -> str | None:
    """Content digest of the labels file, or of the names and sizes in the volume directory."""
    if path is None or not Path(path).exists():
        return path
    p = Path(path)
    h = hashlib.sha256()
    if p.is_dir():
        for f in sorted(p.iterdir()):
            h.update(f"{f.name}:{f.stat().st_size};".encode())
    else:
        h.update(p.read_bytes())
    return h.hexdigest()


def config_hash(cfg: dict) -> str:
    """First 12 hex digits of sha256 over the canonical JSON of result-affecting fields.

    Data paths enter through a content fingerprint so a moved copy of the
    same cohort hashes the same.
    """
    body = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    body["data"] = {k: _fingerprint(v) for k, v in cfg["data"].items()}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:12]
