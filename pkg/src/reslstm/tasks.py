"""Synthetic frame-labelled sequence tasks and their text file format.

``noisy_embedding`` is a memory-light frame classification task; ``delayed_recall``
needs the network to hold a symbol for ``delay_k`` frames.

File format (line oriented, comma separated)::

    T,D,C,kind,seed
    50,16,8,delayed_recall,7
    t,label,v1,...,vD        # one line per frame; t == 0 starts a new sequence

Floats are written with ``repr`` so a read-back is bit-exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import SEED_DATA, SEED_SPLIT, SeededStream

TASK_KINDS = ("noisy_embedding", "delayed_recall")


@dataclass
class SequenceSample:
    frames: np.ndarray  # (T, D)
    labels: np.ndarray  # (T,) int64

    def __post_init__(self):
        if self.frames.shape[0] != self.labels.shape[0]:
            raise ValueError("frames and labels differ in length")


@dataclass
class TaskSpec:
    task_kind: str = "noisy_embedding"
    T: int = 50
    D: int = 16
    C: int = 8
    noise_sigma: float = 0.5
    delay_k: int = 10
    num_sequences: int = 100
    seed: int = 0
    self_transition: float = 0.9

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"task_kind must be one of {TASK_KINDS}, got {self.task_kind!r}")
        if min(self.T, self.D, self.C, self.num_sequences) < 1:
            raise ValueError("T, D, C and num_sequences must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def gen_noisy_embedding(spec: TaskSpec) -> list[SequenceSample]:
    """Markov class chain (self-transition 0.9) emitting unit-norm class embeddings plus noise."""
    rng = SeededStream(spec.seed, SEED_DATA)
    emb = rng.normal((spec.C, spec.D))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    data = []
    for _ in range(spec.num_sequences):
        stay = rng.uniform(spec.T)
        jump = rng.integers(max(spec.C - 1, 1), spec.T)
        labels = np.empty(spec.T, dtype=np.int64)
        labels[0] = rng.integers(spec.C, 1)[0]
        for t in range(1, spec.T):
            if stay[t] < spec.self_transition or spec.C == 1:
                labels[t] = labels[t - 1]
            else:
                # uniform over the other C-1 classes
                labels[t] = jump[t] + (jump[t] >= labels[t - 1])
        frames = emb[labels] + spec.noise_sigma * rng.normal((spec.T, spec.D))
        data.append(SequenceSample(frames, labels))
    return data


def class_embeddings(spec: TaskSpec) -> np.ndarray:
    """The embeddings used by :func:`gen_noisy_embedding` for ``spec``."""
    emb = SeededStream(spec.seed, SEED_DATA).normal((spec.C, spec.D))
    return emb / np.linalg.norm(emb, axis=1, keepdims=True)


def null_class(spec: TaskSpec) -> int:
    return spec.C - 1


def gen_delayed_recall(spec: TaskSpec) -> list[SequenceSample]:
    """Symbols 0..C-2 shown as noisy one-hot frames; label[t] = symbol[t - k].

    The first ``k`` labels are the null class ``C - 1``. ``delay_k = 0``
    reduces to noisy symbol identification.
    """
    k = spec.delay_k
    if k < 0 or k >= spec.T:
        raise ValueError(f"delay_k must satisfy 0 <= k < T, got k={k}, T={spec.T}")
    if spec.C < 2 or spec.D < spec.C - 1:
        raise ValueError("delayed_recall needs C >= 2 and D >= C - 1")
    rng = SeededStream(spec.seed, SEED_DATA)
    n_sym = spec.C - 1
    data = []
    for _ in range(spec.num_sequences):
        symbols = rng.integers(n_sym, spec.T)
        frames = spec.noise_sigma * rng.normal((spec.T, spec.D))
        frames[np.arange(spec.T), symbols] += 1.0
        labels = np.full(spec.T, null_class(spec), dtype=np.int64)
        labels[k:] = symbols[:spec.T - k]
        data.append(SequenceSample(frames, labels))
    return data


def generate(spec: TaskSpec) -> list[SequenceSample]:
    if spec.task_kind == "noisy_embedding":
        return gen_noisy_embedding(spec)
    return gen_delayed_recall(spec)


def split(dataset: list, cv_fraction: float, seed: int) -> tuple[list, list]:
    """Seeded shuffle, then the first ``round(n * cv_fraction)`` items go to CV."""
    if not 0 < cv_fraction < 1:
        raise ValueError("cv_fraction must lie in (0, 1)")
    n = len(dataset)
    n_cv = int(round(n * cv_fraction))
    if n_cv == 0 or n_cv == n:
        raise ValueError(f"split of {n} sequences at {cv_fraction} leaves one side empty")
    perm = SeededStream(seed, SEED_SPLIT).permutation(n)
    cv = [dataset[i] for i in perm[:n_cv]]
    train = [dataset[i] for i in perm[n_cv:]]
    return train, cv


def write_dataset(path, dataset: list[SequenceSample], spec: TaskSpec) -> None:
    with open(path, "w") as fh:
        fh.write("T,D,C,kind,seed\n")
        fh.write(f"{spec.T},{spec.D},{spec.C},{spec.task_kind},{spec.seed}\n")
        for sample in dataset:
            for t, (label, row) in enumerate(zip(sample.labels, sample.frames)):
                fh.write(f"{t},{int(label)}," + ",".join(repr(float(v)) for v in row) + "\n")


def read_dataset(path) -> tuple[list[SequenceSample], dict]:
    """Inverse of :func:`write_dataset`; returns the samples and the header fields."""
    with open(path) as fh:
        keys = fh.readline().strip().split(",")
        values = fh.readline().strip().split(",")
        if keys != ["T", "D", "C", "kind", "seed"] or len(values) != 5:
            raise ValueError(f"{path}: malformed dataset header")
        header = dict(zip(keys, values))
        for key in ("T", "D", "C", "seed"):
            header[key] = int(header[key])
        seqs: list[tuple[list, list]] = []
        for lineno, line in enumerate(fh, start=3):
            parts = line.strip().split(",")
            if len(parts) != header["D"] + 2:
                raise ValueError(f"{path}:{lineno}: expected {header['D'] + 2} fields, got {len(parts)}")
            t = int(parts[0])
            if t == 0:
                seqs.append(([], []))
            elif not seqs or t != len(seqs[-1][0]):
                raise ValueError(f"{path}:{lineno}: frame index {t} out of order")
            seqs[-1][0].append([float(v) for v in parts[2:]])
            seqs[-1][1].append(int(parts[1]))
    data = [SequenceSample(np.array(f, dtype=np.float64), np.array(y, dtype=np.int64)) for f, y in seqs]
    return data, header
