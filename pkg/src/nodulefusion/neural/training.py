"""Adam training on class-balanced minibatches."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .layers import Dropout
from .network import ArchitectureSpec, Network

__all__ = ["TrainConfig", "TrainingDiverged", "balanced_batches", "learning_rate", "train"]

DEFAULT_SCHEDULE = ((1, 0.005), (2, 0.001), (5, 0.0005), (9, 1e-4))


@dataclass
class TrainConfig:
    """Optimiser settings.

    ``lr_schedule`` lists ``(first_epoch, rate)`` pairs; a rate holds until the
    next pair starts. Training stops once the epoch loss is at most
    ``stop_loss`` or ``max_epochs`` epochs have run, whichever comes first.
    ``keep_prob`` overrides every dropout layer when set.
    """

    batch_size: int = 70
    lr_schedule: tuple = DEFAULT_SCHEDULE
    max_epochs: int = 100
    stop_loss: float = 0.01
    keep_prob: float | None = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        self.lr_schedule = tuple((int(e), float(r)) for e, r in self.lr_schedule)
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if not self.lr_schedule or self.lr_schedule[0][0] != 1:
            raise ValueError("learning-rate schedule must start at epoch 1")
        if any(r <= 0 for _, r in self.lr_schedule):
            raise ValueError("learning rates must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.keep_prob is not None and not 0 < self.keep_prob <= 1:
            raise ValueError("keep_prob must be in (0, 1]")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; ``network`` holds the last finite checkpoint."""

    def __init__(self, msg, network: Network):
        super().__init__(msg)
        self.network = network


def learning_rate(epoch: int, schedule=DEFAULT_SCHEDULE) -> float:
    rate = schedule[0][1]
    for first, r in schedule:
        if epoch >= first:
            rate = r
    return rate


def balanced_batches(labels, batch_size: int, rng) -> list[np.ndarray]:
    """One epoch of index batches with equal class counts.

    The majority class is subsampled without replacement to the minority
    size; each batch takes ``batch_size // 2`` from each class.
    """
    labels = np.asarray(labels)
    pos = rng.permutation(np.flatnonzero(labels == 1))
    neg = rng.permutation(np.flatnonzero(labels == 0))
    m = min(len(pos), len(neg))
    pos, neg = pos[:m], neg[:m]
    half = batch_size // 2
    return [rng.permutation(np.concatenate([pos[s : s + half], neg[s : s + half]])) for s in range(0, m, half)]


def _apply_keep_prob(spec: ArchitectureSpec, keep_prob):
    if keep_prob is None:
        return spec
    layers = [Dropout(keep_prob) if isinstance(l, Dropout) else l for l in spec.layers]
    return ArchitectureSpec(spec.name, layers, spec.input_shape, spec.in_channels)


def train(spec, tensors, labels=None, cfg: TrainConfig | None = None, progress=None) -> Network:
    """Fit a network on nodule tensors by Adam over balanced minibatches.

    Parameters
    ----------
    spec : ArchitectureSpec or Network
        Architecture to initialise, or a network to continue from.
    tensors : array (N, X, Y, Z) or list of NoduleTensor
    labels : array of 0/1, optional when ``tensors`` carry labels
    cfg : TrainConfig
    progress : callable, optional
        Called with each epoch's log row.

    Returns
    -------
    Network
        Trained float32 network with ``log`` rows ``{epoch, loss, lr}``.
    """
    cfg = cfg or TrainConfig()
    if labels is None:
        labels = [t.label for t in tensors]
        tensors = [t.values for t in tensors]
    x = np.asarray(tensors, dtype=np.float32)
    y = np.asarray(labels, dtype=np.int64)
    if set(np.unique(y)) != {0, 1}:
        raise ValueError("training needs both classes")

    if isinstance(spec, Network):
        net = spec.copy()
        net.spec = _apply_keep_prob(net.spec, cfg.keep_prob)
    else:
        net = Network(_apply_keep_prob(spec, cfg.keep_prob), seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    m = {k: np.zeros_like(v) for k, v in net.params.items()}
    v = {k: np.zeros_like(p) for k, p in net.params.items()}
    step = 0
    checkpoint = net.copy()
    b1, b2 = cfg.beta1, cfg.beta2

    for epoch in range(1, cfg.max_epochs + 1):
        lr = learning_rate(epoch, cfg.lr_schedule)
        total, count = 0.0, 0
        for batch in balanced_batches(y, cfg.batch_size, rng):
            loss, grads, _ = net.loss_and_grads(x[batch], y[batch], rng)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(grads[k])) for k in net.params):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", checkpoint)
            step += 1
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for k, p in net.params.items():
                g = grads[k].astype(p.dtype, copy=False)
                m[k] = b1 * m[k] + (1 - b1) * g
                v[k] = b2 * v[k] + (1 - b2) * g * g
                p -= (lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + cfg.eps)).astype(p.dtype)
            total += loss * len(batch)
            count += len(batch)
        row = {"epoch": epoch, "loss": total / count, "lr": lr}
        net.log.append(row)
        checkpoint = net.copy()
        if progress is not None:
            progress(row)
        if row["loss"] <= cfg.stop_loss:
            break
    return net
