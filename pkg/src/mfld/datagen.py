"""Synthetic datasets, train/test splitting and CSV persistence."""
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np


class Task(str, Enum):
    CIRCLES = "circles"
    MULTI_INDEX = "multi_index"
    LOW_RANK = "low_rank"
    UNKNOWN = "unknown"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"
    FULL = "full"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class DatasetMeta:
    task: Task = Task.UNKNOWN
    params: dict = field(default_factory=dict)
    split: Split = Split.FULL
    seed: Optional[int] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled examples. ``labels`` is 1-D for scalar targets, 2-D for vector targets."""

    inputs: np.ndarray
    labels: np.ndarray
    meta: DatasetMeta = field(default_factory=DatasetMeta)

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=np.float64, order="C")
        labels = np.array(self.labels, dtype=np.float64, order="C")
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise ValueError(f"inputs must be a non-empty 2-D array, got shape {inputs.shape}")
        if labels.ndim not in (1, 2) or labels.shape[0] != inputs.shape[0]:
            raise ValueError(
                f"got {labels.shape[0] if labels.ndim else 0} labels for {inputs.shape[0]} inputs")
        if self.meta.task is Task.CIRCLES and not np.all(np.abs(labels) == 1.0):
            raise ValueError("circles labels must be -1 or +1")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    def subset(self, index, split=None):
        meta = self.meta if split is None else replace(self.meta, split=split)
        return Dataset(self.inputs[index], self.labels[index], meta)


@dataclass(frozen=True)
class CirclesParams:
    n: int = 200
    r_inner: float = 1.0
    r_outer: float = 2.0
    noise_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 < self.r_inner < self.r_outer:
            raise ValueError("need 0 < r_inner < r_outer")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass(frozen=True)
class MultiIndexParams:
    n: int = 500
    d: int = 100
    k: int = 100
    r: float = 5.0
    label_scale: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n, self.d, self.k) < 1:
            raise ValueError("n, d and k must be positive")
        if self.k > self.d:
            raise ValueError(f"k={self.k} exceeds d={self.d}")
        if self.r <= 0 or self.label_scale <= 0:
            raise ValueError("r and label_scale must be positive")


def gen_circles(p):
    """Two noisy concentric circles; inner circle labelled -1, outer +1.

    Points with index ``i < n/2`` go on the inner circle. Records are
    shuffled before being returned.
    """
    rng = np.random.default_rng(p.seed)
    idx = np.arange(p.n)
    inner = idx < p.n / 2
    radius = np.where(inner, p.r_inner, p.r_outer)
    labels = np.where(inner, -1.0, 1.0)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=p.n)
    noise = rng.normal(0.0, p.noise_std, size=(p.n, 2))
    inputs = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]) + noise
    order = rng.permutation(p.n)
    meta = DatasetMeta(Task.CIRCLES, asdict(p), Split.FULL, p.seed)
    return Dataset(inputs[order], labels[order], meta)


def gen_multi_index(p):
    """Uniform samples in the radius-``r`` ball with ``y = (R/k) sum_{j<k} tanh(z_j)``."""
    rng = np.random.default_rng(p.seed)
    g = rng.standard_normal((p.n, p.d))
    u = rng.uniform(0.0, 1.0, size=p.n)
    direction = g / np.linalg.norm(g, axis=1, keepdims=True)
    inputs = (p.r * u ** (1.0 / p.d))[:, None] * direction
    labels = (p.label_scale / p.k) * np.tanh(inputs[:, :p.k]).sum(axis=1)
    meta = DatasetMeta(Task.MULTI_INDEX, asdict(p), Split.FULL, p.seed)
    return Dataset(inputs, labels, meta)


def split(data, train_frac=0.8, seed=0):
    """Shuffled train/test split with ``floor(n * train_frac)`` training rows."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must lie in (0, 1), got {train_frac}")
    n = len(data)
    n_train = int(math.floor(n * train_frac))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"split of {n} rows at {train_frac} leaves an empty side")
    order = np.random.default_rng(seed).permutation(n)
    return (data.subset(order[:n_train], Split.TRAIN),
            data.subset(order[n_train:], Split.TEST))


def _sidecar(path):
    return os.path.splitext(path)[0] + ".json"


def dataset_write(data, path):
    """CSV with header ``y,z0,...`` (or ``y0,...`` for vector labels) plus a JSON sidecar."""
    labels = data.labels.reshape(len(data), -1)
    ycols = ["y"] if data.labels.ndim == 1 else [f"y{j}" for j in range(labels.shape[1])]
    header = ycols + [f"z{j}" for j in range(data.input_dim)]
    rows = np.hstack([labels, data.inputs])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    meta = {"task": data.meta.task.value, "params": data.meta.params,
            "split": data.meta.split.value, "seed": data.meta.seed}
    with open(_sidecar(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def dataset_read(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = lines[0].split(",")
    ycols = [h for h in header if h.startswith("y")]
    zcols = [h for h in header if h.startswith("z")]
    if not ycols or len(ycols) + len(zcols) != len(header) or header[:len(ycols)] != ycols:
        raise ValueError(f"{path}: malformed header {lines[0]!r}")
    if len(lines) < 2:
        raise ValueError(f"{path}: no data rows")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise ValueError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    table = np.array(rows, dtype=np.float64)
    labels = table[:, :len(ycols)]
    if header[0] == "y":
        labels = labels[:, 0]
    meta = DatasetMeta(split=Split.UNKNOWN)
    if os.path.exists(_sidecar(path)):
        with open(_sidecar(path), encoding="utf-8") as fh:
            raw = json.load(fh)
        meta = DatasetMeta(Task(raw.get("task", "unknown")), raw.get("params", {}),
                           Split(raw.get("split", "unknown")), raw.get("seed"))
    return Dataset(table[:, len(ycols):], labels, meta)
