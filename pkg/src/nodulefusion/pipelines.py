"""End-to-end experiment pipelines run under cross-validation.

Pipelines
---------
ss-hf
    29 handcrafted features, SFS + RBF SVM.
ss-olhf
    Handcrafted features fused with the two output-layer logits of a 3D CNN
    trained on the fold's augmented training tensors, then SFS + SVM.
s-ffl
    Final hidden dense activations of the CNN, variance filter, SVM.
s-fflhf
    Hidden dense activations plus handcrafted features, ReliefF, SVM.
ori-multicrop
    CNN trained on unsegmented cubic patches; the logit difference is the score.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import CNN_PIPELINES
from .eval import FoldError, MetricsReport, roc_auc, run_cv, task_rng, write_roc_csv
from .eval.folds import stratified_folds
from .ingest import (
    Volume,
    VolumeError,
    augment,
    build_tensor,
    dataset_shape,
    list_volume_ids,
    read_labels,
    read_volume,
    resample,
)
from .learn import (
    CvAucScorer,
    relieff_rank,
    relieff_select,
    sfs_select,
    smote_balance,
    svm_train,
    variance_filter,
)
from .neural import Network, TrainConfig, preset, save_network, train, write_training_log
from .radiomics import CNN_OUTPUT_NAMES, FeatureTable, handcrafted, write_feature_table

__all__ = [
    "CohortError",
    "Cohort",
    "Experiment",
    "cnn_feature_table",
    "cohort_tensors",
    "fold_partitions",
    "handcrafted_table",
    "load_cohort",
    "train_cnn",
    "train_config",
]

log = logging.getLogger(__name__)

GRID_C = (0.1, 1.0, 10.0)
GRID_GAMMA = (0.25, 1.0, 4.0)


class CohortError(ValueError):
    """One or more nodules could not be loaded; ``problems`` lists them all."""

    def __init__(self, problems):
        super().__init__(f"{len(problems)} nodule(s) failed to load:\n  " + "\n  ".join(problems))
        self.problems = list(problems)


@dataclass
class Cohort:
    ids: list[str]
    labels: np.ndarray
    volumes: list[Volume]  # resampled to isotropic spacing


def load_cohort(volume_dir, labels_path, target_spacing: float) -> Cohort:
    """Read every labelled volume and resample it; collect all problems first."""
    labels = read_labels(labels_path)
    on_disk = set(list_volume_ids(volume_dir))
    problems, vols = [], []
    for vid in sorted(on_disk | set(labels)):
        if vid not in labels:
            problems.append(f"{vid}: no label in {Path(labels_path).name}")
            continue
        if vid not in on_disk:
            problems.append(f"{vid}: no volume header in {volume_dir}")
            continue
        try:
            vols.append(read_volume(volume_dir, vid))
        except VolumeError as exc:
            problems.append(f"{vid}: {exc}")
    if problems:
        raise CohortError(problems)
    if not vols:
        raise CohortError(["no volumes found"])
    vols = [resample(v, target_spacing) for v in vols]
    return Cohort([v.id for v in vols], np.array([labels[v.id] for v in vols]), vols)


def handcrafted_table(cohort: Cohort) -> FeatureTable:
    return FeatureTable.from_dicts(cohort.ids, cohort.labels, [handcrafted(v) for v in cohort.volumes])


def cnn_feature_table(net: Network, tensors, ids, labels) -> FeatureTable:
    """Output-layer logits as ``cnn_featurep`` (positive class) and ``cnn_featuren``."""
    logits = net.output_features(np.array([t.values for t in tensors])).astype(np.float64)
    return FeatureTable(ids, labels, list(CNN_OUTPUT_NAMES), logits[:, [1, 0]])


def train_config(cfg: dict, seed: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        batch_size=int(t["batch_size"]),
        lr_schedule=tuple(tuple(p) for p in t["lr_schedule"]),
        max_epochs=int(t["max_epochs"]),
        stop_loss=float(t["stop_loss"]),
        keep_prob=t["keep_prob"],
        seed=seed,
    )


def cohort_tensors(cohort: Cohort, cfg: dict, patch=False):
    """CNN input tensors: segmented ROIs at ``tensor_shape`` or cubic raw patches."""
    if patch:
        p = int(cfg["patch_size"])
        shape, mode = (p, p, p), "patch"
    else:
        ts = cfg["tensor_shape"]
        shape = dataset_shape(cohort.volumes) if ts == "auto" else tuple(int(n) for n in ts)
        mode = "segmented"
    return shape, [build_tensor(v, shape, mode, int(y)) for v, y in zip(cohort.volumes, cohort.labels)]


def train_cnn(cfg: dict, tensors, shape, seed: int, outdir=None) -> Network:
    """Train the configured preset on the augmented ``tensors``; save model and log to ``outdir``."""
    aug = [a for t in tensors for a in augment(t)]
    spec = preset(cfg["architecture"], input_shape=shape)
    net = train(spec, [a.values for a in aug], [a.label for a in aug], train_config(cfg, seed))
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        save_network(outdir / "cnn.bin", net)
        write_training_log(outdir / "train_log.csv", net.log)
        log.info("trained %s: %d epochs, final loss %.4g", outdir.name, len(net.log), net.log[-1]["loss"])
    return net


def _seed(seed, *path) -> int:
    return int(task_rng(seed, *path).integers(1 << 31))


@contextmanager
def _stage(fold, name):
    try:
        yield
    except FoldError:
        raise
    except Exception as exc:
        raise FoldError(fold, name, exc) from exc


class Experiment:
    """One configured pipeline over one cohort, writing into ``workdir``."""

    def __init__(self, cfg: dict, workdir, cohort: Cohort | None = None):
        self.cfg = cfg
        self.pipeline = cfg["pipeline"]
        self.seed = int(cfg["eval"]["seed"])
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.cohort = cohort or load_cohort(cfg["data"]["volumes"], cfg["data"]["labels"], cfg["target_spacing"])
        self.hf = None
        self.tensors = None
        self.global_net = None

    # ------------------------------------------------------------ preparation

    def prepare(self):
        c = self.cohort
        if self.pipeline != "ori-multicrop":
            self.hf = handcrafted_table(c)
            write_feature_table(self.workdir / "features_handcrafted.csv", self.hf)
        if self.pipeline in CNN_PIPELINES:
            self.tensor_shape, self.tensors = cohort_tensors(c, self.cfg, patch=self.pipeline == "ori-multicrop")
            if self.cfg["train_once"]:
                log.warning("train_once: the CNN sees every nodule, including test folds")
                self.global_net = self._train_cnn(np.arange(len(c.ids)), _seed(self.seed, 99), self.workdir / "cnn_all")

    def _train_cnn(self, rows, seed, outdir: Path) -> Network:
        return train_cnn(self.cfg, [self.tensors[i] for i in rows], self.tensor_shape, seed, outdir)

    # ------------------------------------------------------------ classifier stages

    def _balance(self, X, y, fold):
        k = int(self.cfg["learn"]["smote_k"])
        if k <= 0:
            return X, y
        return smote_balance(X, y, k, task_rng(self.seed, fold, 3))

    def _pick_svm_params(self, X, y, fold):
        lc = self.cfg["learn"]
        if not lc["grid"]:
            return float(lc["C"]), float(lc["gamma_scale"])
        best = None
        for C in GRID_C:
            for g in GRID_GAMMA:
                s = CvAucScorer(X, y, int(lc["inner_folds"]), _seed(self.seed, fold, 4), C, g)(list(range(X.shape[1])))
                if best is None or s > best[0]:
                    best = (s, C, g)
        return best[1], best[2]

    def _svm_scores(self, Xtr, ytr, Xte, fold):
        C, g = self._pick_svm_params(Xtr, ytr, fold)
        model = svm_train(Xtr, ytr, C=C, gamma_scale=g)
        return model.decision(Xte), {"C": C, "gamma": model.gamma, "n_support": int(len(model.coef))}

    def _sfs_svm(self, table: FeatureTable, train, test, fold):
        lc = self.cfg["learn"]
        with _stage(fold, "smote"):
            Xtr, ytr = self._balance(table.values[train], table.labels[train], fold)
        with _stage(fold, "feature-selection"):
            sel = sfs_select(
                Xtr,
                ytr,
                table.names,
                folds=int(lc["inner_folds"]),
                seed=_seed(self.seed, fold, 2),
                min_runs=int(lc["min_runs"]),
                inner_folds=int(lc["inner_folds"]),
                C=float(lc["C"]),
                gamma_scale=float(lc["gamma_scale"]),
                threshold=float(lc["sfs_threshold"]),
            )
        chosen = sel.selected
        if not chosen and sel.counts and lc["empty_consensus"] == "plurality":
            # correlated features can split the vote so nothing reaches min_runs
            top = max(sel.counts.values())
            chosen = [n for n in table.names if sel.counts.get(n, 0) == top]
        info = {"selection": sel.to_dict(), "used": chosen}
        if not chosen:
            return np.zeros(len(test)), info
        cols = [table.names.index(n) for n in chosen]
        with _stage(fold, "svm"):
            scores, extra = self._svm_scores(Xtr[:, cols], ytr, table.values[np.ix_(test, cols)], fold)
        info.update(extra)
        return scores, info

    # ------------------------------------------------------------ folds

    def _fold_dir(self, fold) -> Path:
        d = self.workdir / f"fold{fold}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def fold_net(self, fold, train) -> Network:
        if self.global_net is not None:
            return self.global_net
        with _stage(fold, "cnn-train"):
            return self._train_cnn(train, _seed(self.seed, fold, 1), self.workdir / f"fold{fold}")

    def __call__(self, fold, train, test):
        c = self.cohort
        if self.pipeline == "ss-hf":
            return self._sfs_svm(self.hf, train, test, fold)

        net = self.fold_net(fold, train)
        values = np.array([t.values for t in self.tensors])
        if self.pipeline == "ori-multicrop":
            with _stage(fold, "cnn-score"):
                logits = net.output_features(values[test]).astype(np.float64)
            return logits[:, 1] - logits[:, 0], {}

        if self.pipeline == "ss-olhf":
            with _stage(fold, "cnn-features"):
                table = self.hf.hstack(cnn_feature_table(net, self.tensors, c.ids, c.labels))
                write_feature_table(self._fold_dir(fold) / "features.csv", table)
            return self._sfs_svm(table, train, test, fold)

        with _stage(fold, "cnn-features"):
            ffl = net.ffl_features(values).astype(np.float64)
            names = [f"ffl_{j:04d}" for j in range(ffl.shape[1])]
            table = FeatureTable(c.ids, c.labels, names, ffl)
            if self.pipeline == "s-fflhf":
                table = table.hstack(self.hf)
            write_feature_table(self._fold_dir(fold) / "features.csv", table)
        with _stage(fold, "feature-selection"):
            Xtr0, ytr0 = table.values[train], table.labels[train]
            if self.pipeline == "s-ffl":
                cols = np.flatnonzero(variance_filter(Xtr0))
            else:
                lc = self.cfg["learn"]
                w = relieff_rank(Xtr0, ytr0, k=int(lc["relieff_k"]), rng=task_rng(self.seed, fold, 5))
                cols = np.sort(relieff_select(w, lc["relieff_top"]))
        info = {"selected": [table.names[j] for j in cols]}
        if len(cols) == 0:
            return np.zeros(len(test)), info
        with _stage(fold, "smote"):
            Xtr, ytr = self._balance(Xtr0[:, cols], ytr0, fold)
        with _stage(fold, "svm"):
            scores, extra = self._svm_scores(Xtr, ytr, table.values[np.ix_(test, cols)], fold)
        info.update(extra)
        return scores, info

    # ------------------------------------------------------------ driver

    def run(self) -> MetricsReport:
        self.prepare()
        k = int(self.cfg["eval"]["folds"])
        report = run_cv(
            self.cohort.labels,
            self,
            name=self.pipeline,
            k=k,
            seed=self.seed,
            workers=int(self.cfg.get("workers", 1)),
            meta={"ids": self.cohort.ids, "architecture": self.cfg["architecture"] if self.pipeline in CNN_PIPELINES else None},
        )
        self.write_report(report)
        return report

    def write_report(self, report: MetricsReport):
        (self.workdir / "metrics.json").write_text(report.to_json())
        for f in report.folds:
            write_roc_csv(self.workdir / f"roc_fold{f.fold}.csv", roc_auc(f.scores, f.labels))
        write_roc_csv(self.workdir / "roc_pooled.csv", report.pooled_roc())


def fold_partitions(labels, k, seed):
    """The fixed test partitions every pipeline shares for a given seed."""
    return [f.tolist() for f in stratified_folds(labels, k, seed)]
