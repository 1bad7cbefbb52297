"""Synthetic low-rank fine-tuning of a frozen linear layer with noisy AdamW."""
import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .datagen import Dataset, DatasetMeta, Split, Task
from .ensemble import LoraAdapter
from .optim import AdamWState, noisy_adamw_step


@dataclass(frozen=True, eq=False)
class LoraTask:
    base: np.ndarray     # W0, (k, d), frozen
    target: np.ndarray   # W*, (k, d)
    n: int
    noise_std: float
    seed: int

    @property
    def shape(self):
        return self.base.shape


def gen_lowrank_task(k, d, rank, n, noise_std, seed):
    """Return ``(task, data)`` with ``W* = W0 + P Q^T`` of rank ``rank``.

    Inputs are standard normal, labels ``y = W* z + noise`` are k-vectors.
    """
    if not 0 <= rank <= min(k, d):
        raise ValueError(f"rank {rank} must lie in [0, min(k, d) = {min(k, d)}]")
    if n < 1 or noise_std < 0:
        raise ValueError("need n >= 1 and noise_std >= 0")
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((k, d)) / math.sqrt(d)
    P = rng.standard_normal((k, rank))
    Q = rng.standard_normal((d, rank)) / math.sqrt(d)
    target = base + P @ Q.T
    inputs = rng.standard_normal((n, d))
    labels = inputs @ target.T + noise_std * rng.standard_normal((n, k))
    params = {"k": k, "d": d, "rank": rank, "n": n, "noise_std": noise_std, "seed": seed}
    data = Dataset(inputs, labels, DatasetMeta(Task.LOW_RANK, params, Split.FULL, seed))
    return LoraTask(base, target, n, noise_std, seed), data


def lora_forward(base, adapter, z):
    """``W0 z + gamma B (A z)`` for one input or a batch of rows."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != base.shape[1] or adapter.shape != base.shape:
        raise ValueError(
            f"shape mismatch: base {base.shape}, adapter {adapter.shape}, input {z.shape}")
    return z @ base.T + adapter.gamma * ((z @ adapter.A.T) @ adapter.B.T)


def evaluate(base, delta, data):
    """Mean over examples of ``|(W0 + dW) z - y|^2 / k``."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    resid = data.inputs @ (base + delta).T - data.labels.reshape(len(data), -1)
    return float(np.mean(resid * resid))


def lora_objective(base, adapter, data, l2=0.0):
    """Mean squared error plus ``l2 * (|A|^2 + |B|^2) / N``."""
    penalty = l2 * (np.sum(adapter.A ** 2) + np.sum(adapter.B ** 2)) / adapter.rank
    return evaluate(base, adapter.delta(), data) + penalty


def lora_grads(base, adapter, data, l2=0.0):
    """Gradients of :func:`lora_objective` with respect to ``(A, B)``."""
    Z = data.inputs
    Y = data.labels.reshape(len(data), -1)
    n, k = Y.shape
    U = Z @ adapter.A.T                              # (n, N)
    resid = Z @ base.T + adapter.gamma * (U @ adapter.B.T) - Y
    G = 2.0 * resid / (n * k)
    grad_B = adapter.gamma * (G.T @ U) + 2.0 * l2 * adapter.B / adapter.rank
    grad_A = adapter.gamma * ((G @ adapter.B).T @ Z) + 2.0 * l2 * adapter.A / adapter.rank
    return grad_A, grad_B


@dataclass(frozen=True)
class LoraConfig:
    """Noisy AdamW settings for adapter fine-tuning.

    ``epochs`` counts full-batch steps. ``l2`` adds the mean-field penalty
    on (A, B); ``weight_decay`` is AdamW's decoupled decay.
    """

    lr: float = 0.01
    temperature: float = 1e-5
    epochs: int = 300
    l2: float = 1e-4
    weight_decay: float = 0.0
    init_std: float = 1.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 0:
            raise ValueError("need lr > 0 and epochs >= 0")
        for name in ("temperature", "l2", "weight_decay", "init_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def finetune(base, data, rank, cfg):
    """Train a rank-``rank`` adapter on ``data`` with ``W0 = base`` frozen.

    A starts Gaussian, B starts at zero, so the initial update is zero.
    """
    if rank < 1:
        raise ValueError("rank must be positive")
    k, d = base.shape
    init = _rng.stream(cfg.seed, "lora-init")
    adapter = LoraAdapter(cfg.init_std * init.standard_normal((rank, d)), np.zeros((k, rank)))
    noise = _rng.stream(cfg.seed, "lora-noise")
    size_a = rank * d
    params = np.concatenate([adapter.A.ravel(), adapter.B.ravel()])
    state = AdamWState.zeros_like(params, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    for _ in range(cfg.epochs):
        grad_A, grad_B = lora_grads(base, adapter, data, cfg.l2)
        grad = np.concatenate([grad_A.ravel(), grad_B.ravel()])
        params, state = noisy_adamw_step(params, grad, state, cfg.lr, cfg.temperature,
                                         cfg.weight_decay, noise)
        adapter = LoraAdapter(params[:size_a].reshape(rank, d),
                              params[size_a:].reshape(k, rank))
    return adapter
