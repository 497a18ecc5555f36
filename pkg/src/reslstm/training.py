"""Cross-entropy, SGD with L2 decay, and the per-sequence training loop."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .network import StackedNetwork, forward_sequence, loss_and_grads
from .numerics import SEED_SHUFFLE, SeededStream, log_softmax

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "train_ce", "cv_ce", "frame_acc", "seconds")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    l2_lambda: float = 0.0
    bptt_len: int = 20
    epochs: int = 10
    seed: int = 0
    lr_halving: bool = False
    # rescale each sequence gradient to this global L2 norm when exceeded; 0 disables
    clip_norm: float = 0.0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not self.l2_lambda >= 0:
            raise ValueError("l2_lambda must be >= 0")
        if not self.clip_norm >= 0:
            raise ValueError("clip_norm must be >= 0")
        if self.bptt_len < 1 or self.epochs < 0:
            raise ValueError("bptt_len must be >= 1 and epochs >= 0")


@dataclass
class EpochMetrics:
    epoch: int
    train_ce: float
    cv_ce: float
    frame_acc: float
    seconds: float


def cross_entropy(logits, label: int) -> float:
    z = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < z.shape[-1]:
        raise ValueError(f"label {label} outside [0, {z.shape[-1]})")
    return -float(log_softmax(z)[label])


def is_decayed(name: str, tensor: np.ndarray) -> bool:
    """L2 applies to weight matrices only; biases and peepholes are exempt."""
    return tensor.ndim == 2


def sgd_step(params: StackedNetwork, grads: StackedNetwork, lr: float, l2_lambda: float) -> StackedNetwork:
    """In-place ``p <- p - lr * (g + l2 * p)``; returns ``params``."""
    for (name, p), (gname, g) in zip(params.named_tensors(), grads.named_tensors()):
        if name != gname or p.shape != g.shape:
            raise ValueError(f"gradient {gname}{g.shape} does not mirror parameter {name}{p.shape}")
        if l2_lambda and is_decayed(name, p):
            p -= lr * (g + l2_lambda * p)
        else:
            p -= lr * g
    return params


def clip_grads(grads: StackedNetwork, max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``; returns the original norm."""
    norm = math.sqrt(sum(float(np.vdot(g, g)) for _, g in grads.named_tensors()))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for _, g in grads.named_tensors():
            g *= factor
    return norm


def evaluate(net: StackedNetwork, dataset) -> tuple[float, float]:
    """Frame-weighted mean cross-entropy and frame accuracy over ``dataset``."""
    if not dataset:
        raise ValueError("cannot evaluate an empty dataset")
    total_ce = 0.0
    correct = 0
    frames = 0
    for sample in dataset:
        logits, _, _ = forward_sequence(net, sample.frames, keep_trace=False)
        y = np.asarray(sample.labels)
        logp = log_softmax(logits)
        total_ce -= float(np.sum(logp[np.arange(len(y)), y]))
        correct += int(np.sum(np.argmax(logits, axis=1) == y))
        frames += len(y)
    return total_ce / frames, correct / frames


def train(net: StackedNetwork, train_set, cv_set, cfg: TrainConfig,
          on_epoch=None) -> list[EpochMetrics]:
    """Per-sequence SGD; the train CE reported is the running mean over the epoch."""
    if not train_set or not cv_set:
        raise ValueError("train and cv sets must be non-empty")
    rng = SeededStream(cfg.seed, SEED_SHUFFLE)
    lr = cfg.learning_rate
    best_cv = math.inf
    history = []
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        total, frames = 0.0, 0
        for idx in rng.permutation(len(train_set)):
            sample = train_set[idx]
            loss, grads = loss_and_grads(net, sample.frames, sample.labels, cfg.bptt_len)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, sequence {idx}")
            if cfg.clip_norm:
                clip_grads(grads, cfg.clip_norm)
            sgd_step(net, grads, lr, cfg.l2_lambda)
            total += loss * len(sample.labels)
            frames += len(sample.labels)
        cv_ce, acc = evaluate(net, cv_set)
        if not math.isfinite(cv_ce):
            raise TrainingError(f"non-finite CV loss at epoch {epoch}")
        metrics = EpochMetrics(epoch, total / frames, cv_ce, acc, time.perf_counter() - start)
        history.append(metrics)
        log.info("epoch %d train_ce=%.5f cv_ce=%.5f acc=%.4f lr=%g", epoch, metrics.train_ce,
                 cv_ce, acc, lr)
        if on_epoch is not None:
            on_epoch(metrics)
        if cfg.lr_halving and cv_ce > best_cv:
            lr *= 0.5
        best_cv = min(best_cv, cv_ce)
    return history


def write_metrics_csv(history: list[EpochMetrics], path, wallclock: bool = True) -> None:
    """One row per epoch. With ``wallclock=False`` the seconds column is written as 0."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for m in history:
            w.writerow([m.epoch, repr(m.train_ce), repr(m.cv_ce), repr(m.frame_acc),
                        f"{m.seconds:.3f}" if wallclock else "0"])
