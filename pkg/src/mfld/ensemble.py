"""Merging independently trained networks, random pruning and LoRA merging."""
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np


def merge(systems):
    """Concatenate the particles of several networks into one.

    The merged network weighs every particle equally, so its output is the
    particle-count weighted mean of the member outputs (the plain mean when
    all members have the same size).
    """
    systems = list(systems)
    if not systems:
        raise ValueError("merge needs at least one network")
    first = systems[0]
    for j, s in enumerate(systems[1:], start=1):
        if s.scale != first.scale:
            raise ValueError(f"member {j} has scale {s.scale}, member 0 has {first.scale}")
        if s.input_dim != first.input_dim:
            raise ValueError(
                f"member {j} has input_dim {s.input_dim}, member 0 has {first.input_dim}")
    params = np.concatenate([s.params for s in systems], axis=0)
    tag = "merge(" + ";".join(s.provenance for s in systems) + ")"
    return first.replace_params(params, provenance=tag)


def prune_random(system, s_keep, seed):
    """Keep a uniformly random subset of ``s_keep`` particles (without replacement)."""
    if not 1 <= s_keep <= system.n_particles:
        raise ValueError(f"s_keep={s_keep} outside [1, {system.n_particles}]")
    keep = np.random.default_rng(seed).choice(system.n_particles, size=s_keep, replace=False)
    return system.replace_params(system.params[np.sort(keep)],
                                 provenance=f"prune({system.provenance};s={s_keep})")


@dataclass(frozen=True, eq=False)
class LoraAdapter:
    """Rank-N update ``gamma * B @ A`` with A of shape (N, d) and B of shape (k, N)."""

    A: np.ndarray
    B: np.ndarray
    gamma: Optional[float] = None

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        B = np.array(self.B, dtype=np.float64)
        if A.ndim != 2 or B.ndim != 2 or B.shape[1] != A.shape[0]:
            raise ValueError(f"inner dimensions disagree: A {A.shape}, B {B.shape}")
        gamma = 1.0 / A.shape[0] if self.gamma is None else float(self.gamma)
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "gamma", gamma)

    @property
    def rank(self):
        return self.A.shape[0]

    @property
    def shape(self):
        """Shape (k, d) of the weight update."""
        return self.B.shape[0], self.A.shape[1]

    def delta(self):
        return self.gamma * (self.B @ self.A)


def lora_merge(adapters):
    """Average the members' ``gamma_j B_j A_j`` into a single (k, d) matrix."""
    adapters = list(adapters)
    if not adapters:
        raise ValueError("lora_merge needs at least one adapter")
    ref = (adapters[0].A.shape, adapters[0].B.shape)
    total = np.zeros(adapters[0].shape)
    for j, ad in enumerate(adapters):
        if (ad.A.shape, ad.B.shape) != ref:
            raise ValueError(f"adapter {j} has shapes {(ad.A.shape, ad.B.shape)}, expected {ref}")
        total += ad.delta()
    return total / len(adapters)


def write_matrix(matrix, path):
    """Row-major CSV preceded by a ``# rows cols`` comment line."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {matrix.shape[0]} {matrix.shape[1]}\n")
        for row in matrix:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def read_matrix(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '# rows cols' header")
    try:
        rows, cols = (int(t) for t in lines[0][1:].split())
    except ValueError:
        raise ValueError(f"{path}: malformed header {lines[0]!r}") from None
    data = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    matrix = np.array(data, dtype=np.float64).reshape(len(data), -1) if data else np.zeros((0, 0))
    if matrix.shape != (rows, cols):
        raise ValueError(f"{path}: header says {(rows, cols)}, body is {matrix.shape}")
    return matrix


def save_adapter(adapter, stem):
    """Write ``<stem>.A.csv``, ``<stem>.B.csv`` and ``<stem>.json`` (gamma)."""
    write_matrix(adapter.A, stem + ".A.csv")
    write_matrix(adapter.B, stem + ".B.csv")
    with open(stem + ".json", "w", encoding="utf-8") as fh:
        json.dump({"gamma": adapter.gamma, "rank": adapter.rank}, fh, indent=2)
        fh.write("\n")


def load_adapter(stem):
    gamma = None
    if os.path.exists(stem + ".json"):
        with open(stem + ".json", encoding="utf-8") as fh:
            gamma = json.load(fh).get("gamma")
    return LoraAdapter(read_matrix(stem + ".A.csv"), read_matrix(stem + ".B.csv"), gamma)
