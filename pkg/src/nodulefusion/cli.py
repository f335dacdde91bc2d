"""Command line interface.

Commands: ``synth``, ``extract-features``, ``train-cnn``, ``run`` and ``report``.
Exit status is 0 on success, 2 on a configuration or input validation error
and 1 on a runtime failure. Artifacts go under ``<out>/<config-hash>/``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from itertools import combinations
from pathlib import Path

import numpy as np

from .config import ConfigError, config_hash, load_config, resolve_config, validate_config
from .eval import MetricsReport, iso_accuracy_threshold, t_test
from .ingest import VolumeError
from .pipelines import (
    CohortError,
    Experiment,
    cnn_feature_table,
    cohort_tensors,
    handcrafted_table,
    load_cohort,
    train_cnn,
)
from .neural import PRESETS, load_network
from .radiomics import write_feature_table

log = logging.getLogger("nodulefusion")

REPORT_METRICS = ("auc", "acc", "sen", "spe", "iso_acc", "iso_sen", "iso_spe")


# ---------------------------------------------------------------- config plumbing


def _config(args, need_data=True, need_arch=False) -> dict:
    cfg = load_config(args.config) if args.config else resolve_config({})
    if getattr(args, "seed", None) is not None:
        cfg["eval"]["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    if getattr(args, "pipeline", None):
        cfg["pipeline"] = args.pipeline
    if getattr(args, "architecture", None):
        cfg["architecture"] = args.architecture
    if getattr(args, "train_once", False):
        cfg["train_once"] = True
    if getattr(args, "out", None):
        cfg["out"] = str(Path(args.out).resolve())
    cfg = validate_config(cfg, need_data=need_data)
    if need_arch and cfg["architecture"] not in PRESETS:
        raise ConfigError(f"architecture {cfg['architecture']!r} is not one of {', '.join(sorted(PRESETS))}")
    return cfg


def _workdir(cfg) -> Path:
    d = Path(cfg["out"]) / config_hash(cfg)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return d


def _cohort(cfg):
    return load_cohort(cfg["data"]["volumes"], cfg["data"]["labels"], cfg["target_spacing"])


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    from .synth import write_cohort

    out = write_cohort(args.out, count=args.count, seed=args.seed)
    cfg_text = (
        "# synthetic cohort written by `nodulefusion synth`\n"
        "data:\n  volumes: volumes\n  labels: labels.csv\n"
        "target_spacing: 1.0\narchitecture: multicrop3d_toy\n"
        "train: {max_epochs: 3}\nout: runs\n"
    )
    (out / "config.yaml").write_text(cfg_text)
    print(f"wrote {args.count} nodules to {out}")
    return 0


def cmd_extract_features(args) -> int:
    cfg = _config(args)
    cohort = _cohort(cfg)
    table = handcrafted_table(cohort)
    name = "features.csv"
    if args.model:
        net = load_network(args.model)
        shape = tuple(net.spec.input_shape)
        _, tensors = cohort_tensors(cohort, {**cfg, "tensor_shape": list(shape)})
        table = table.hstack(cnn_feature_table(net, tensors, cohort.ids, cohort.labels))
        digest = hashlib.sha256(Path(args.model).read_bytes()).hexdigest()[:12]
        name = f"features_fusion_{digest}.csv"
    path = _workdir(cfg) / name
    write_feature_table(path, table)
    print(f"{len(table)} rows x {len(table.names)} features -> {path}")
    return 0


def cmd_train_cnn(args) -> int:
    cfg = _config(args, need_arch=True)
    cohort = _cohort(cfg)
    shape, tensors = cohort_tensors(cohort, cfg)
    outdir = _workdir(cfg) / "cnn"
    net = train_cnn(cfg, tensors, shape, int(cfg["eval"]["seed"]), outdir)
    print(f"{cfg['architecture']} {shape}: {len(net.log)} epochs, final loss {net.log[-1]['loss']:.6g} -> {outdir}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    workdir = _workdir(cfg)
    report = Experiment(cfg, workdir, _cohort(cfg)).run()
    agg = report.aggregate()
    print(f"pipeline,{','.join(REPORT_METRICS)}")
    print(cfg["pipeline"] + "," + ",".join(f"{agg[m]['mean']:.4f}±{agg[m]['std']:.4f}" for m in REPORT_METRICS))
    print(f"artifacts: {workdir}")
    return 0


def _load_report(path) -> MetricsReport:
    p = Path(path)
    if p.is_dir():
        p = p / "metrics.json"
    if not p.exists():
        raise ConfigError(f"{path}: no metrics.json found")
    return MetricsReport.from_dict(json.loads(p.read_text()))


def summary_rows(reports) -> list[list]:
    rows = [["pipeline"] + [f"{m}_{s}" for m in REPORT_METRICS for s in ("mean", "std")]]
    for r in reports:
        agg = r.aggregate()
        rows.append([r.pipeline] + [f"{agg[m][s]:.6f}" for m in REPORT_METRICS for s in ("mean", "std")])
    return rows


def pvalue_rows(reports) -> list[list]:
    """Unpaired t-tests on per-fold AUCs for every pair of pipelines."""
    rows = [["a", "b", "t", "p"]]
    for a, b in combinations(reports, 2):
        t, p = t_test([f.auc for f in a.folds], [f.auc for f in b.folds])
        rows.append([a.pipeline, b.pipeline, f"{t:.6g}", f"{p:.6g}"])
    return rows


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def plot_roc(reports, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 5))
    for r in reports:
        roc = r.pooled_roc()
        (line,) = ax.plot(roc.fpr, roc.tpr, drawstyle="steps-post", label=f"{r.pipeline} (AUC {roc.auc:.3f})")
        iso = iso_accuracy_threshold(roc)
        fx = np.linspace(0, 1, 2)
        ax.plot(fx, iso.slope * fx + iso.intercept, ls="--", lw=0.8, color=line.get_color())
        ax.plot([iso.fpr], [iso.tpr], "o", color=line.get_color())
    ax.plot([0, 1], [0, 1], ":", color="grey", lw=0.8)
    ax.set(xlim=(0, 1), ylim=(0, 1), xlabel="false positive rate", ylabel="true positive rate")
    ax.set_title("pooled ROC with ISO-accuracy tangents")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_metrics(reports, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metrics = ("auc", "acc", "sen", "spe")
    width = 0.8 / max(len(reports), 1)
    fig, ax = plt.subplots(figsize=(6.5, 4))
    for i, r in enumerate(reports):
        agg = r.aggregate()
        x = np.arange(len(metrics)) + i * width
        ax.bar(x, [agg[m]["mean"] for m in metrics], width, yerr=[agg[m]["std"] for m in metrics], capsize=3, label=r.pipeline)
    ax.set_xticks(np.arange(len(metrics)) + 0.4 - width / 2, [m.upper() for m in metrics])
    ax.set(ylim=(0, 1.05), ylabel="mean ± std over folds")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_report(args) -> int:
    reports = [_load_report(p) for p in args.runs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = _csv_text(summary_rows(reports))
    (out / "summary.csv").write_text(summary)
    sys.stdout.write(summary)
    if len(reports) > 1:
        pv = _csv_text(pvalue_rows(reports))
        (out / "pvalues.csv").write_text(pv)
        sys.stdout.write("\n" + pv)
    plot_roc(reports, out / "roc.png")
    plot_metrics(reports, out / "metrics.png")
    print(f"figures: {out / 'roc.png'}, {out / 'metrics.png'}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    from .config import PIPELINES

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON experiment config")
    common.add_argument("--seed", type=int, help="overrides eval.seed")
    common.add_argument("--workers", type=int, help="worker processes for cross-validation folds")
    common.add_argument("--out", help="artifact root (overrides config out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="nodulefusion", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a seeded synthetic cohort")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=200)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract-features", parents=[common], help="handcrafted (+ CNN) feature CSV")
    s.add_argument("--model", help="trained CNN file; adds cnn_featurep and cnn_featuren")
    s.set_defaults(func=cmd_extract_features)

    s = sub.add_parser("train-cnn", parents=[common], help="train the CNN on every nodule")
    s.add_argument("--architecture", help="preset name")
    s.set_defaults(func=cmd_train_cnn)

    s = sub.add_parser("run", parents=[common], help="cross-validated pipeline run")
    s.add_argument("--pipeline", choices=PIPELINES)
    s.add_argument("--architecture", help="preset name")
    s.add_argument("--train-once", action="store_true", help="one CNN on all nodules (leaks test folds)")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="summary CSV, p-values and figures from run directories")
    s.add_argument("runs", nargs="+", help="run directories or metrics.json files")
    s.add_argument("--out", default="report")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CohortError, VolumeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
