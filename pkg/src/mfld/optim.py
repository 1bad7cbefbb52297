"""Mean-field Langevin dynamics (noisy gradient descent) and noisy AdamW."""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _rng
from .core import LossKind, ParticleSystem, empirical_risk, first_variation_grads
from .records import MetricRecord


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for full-batch MFLD.

    ``temperature`` is the entropy coefficient (noise std per step is
    ``sqrt(2 * temperature * step_size)``) and ``l2`` the coefficient of the
    ``l2 * |x|^2`` penalty on each particle. One epoch is one full-batch step.
    """

    step_size: float = 0.1
    temperature: float = 0.01
    l2: float = 0.1
    epochs: int = 200
    loss: LossKind = LossKind.LOGISTIC
    seed: int = 0
    init_std: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "loss", LossKind(self.loss))
        for name in ("step_size", "temperature", "l2", "init_std"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.step_size * self.l2 >= 0.5:
            warnings.warn(
                f"step_size * l2 = {self.step_size * self.l2} >= 1/2; the uniform-in-time "
                "particle approximation guarantee does not cover this regime",
                RuntimeWarning, stacklevel=3)

    @property
    def noise_std(self):
        return math.sqrt(2.0 * self.temperature * self.step_size)


def init_system(n_particles, input_dim, scale, cfg, provenance=None):
    """Gaussian initialisation; row i is the i-th block of the ``(seed, 'init')`` stream."""
    if n_particles < 1 or input_dim < 1:
        raise ValueError("n_particles and input_dim must be positive")
    rng = _rng.stream(cfg.seed, "init")
    params = cfg.init_std * rng.standard_normal((n_particles, input_dim + 2))
    tag = f"seed={cfg.seed}" if provenance is None else provenance
    return ParticleSystem(params, scale, tag)


def step_noise(seed, k, particle_ids, dim):
    """Standard normal noise for step ``k``.

    Row ``i`` of the result is the ``particle_ids[i]``-th block of the
    ``(seed, 'noise', k)`` stream, so a particle's noise depends only on
    its id, never on how many other particles exist or their order.
    """
    ids = np.asarray(particle_ids)
    rows = _rng.stream(seed, "noise", k).standard_normal((int(ids.max()) + 1, dim))
    return rows[ids]


def mfld_step(system, data, cfg, k, particle_ids=None):
    """One synchronous noisy gradient step.

    All gradients are taken at the pre-step system before any particle
    moves. ``data=None`` drops the risk term (only the L2 drift remains).
    """
    ids = np.arange(system.n_particles) if particle_ids is None else particle_ids
    grads = first_variation_grads(system, data, cfg.loss, cfg.l2)
    new = system.params - cfg.step_size * grads
    if cfg.temperature > 0:
        new = new + cfg.noise_std * step_noise(cfg.seed, k, ids, system.params.shape[1])
    if not np.all(np.isfinite(new)):
        raise FloatingPointError(f"non-finite particle parameters after step {k}")
    return system.replace_params(new)


def train(system, data, cfg, test=None, particle_ids=None, experiment="train"):
    """Run ``cfg.epochs`` MFLD steps and record per-epoch losses.

    Returns ``(system, trajectory)``. With ``data=None`` the trajectory holds
    the mean per-coordinate variance instead of losses.
    """
    trajectory = []
    for k in range(cfg.epochs):
        system = mfld_step(system, data, cfg, k, particle_ids)
        epoch = k + 1
        if data is None:
            trajectory.append(MetricRecord(experiment, "variance",
                                           float(np.mean(np.var(system.params, axis=0))), epoch=epoch))
            continue
        trajectory.append(MetricRecord(experiment, "train_loss",
                                       empirical_risk(system, data, cfg.loss), epoch=epoch))
        if test is not None:
            trajectory.append(MetricRecord(experiment, "test_loss",
                                           empirical_risk(system, test, cfg.loss), epoch=epoch))
    return system, trajectory


@dataclass(frozen=True, eq=False)
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kwargs):
        params = np.asarray(params, dtype=np.float64)
        return cls(np.zeros_like(params), np.zeros_like(params), 0, **kwargs)


def noisy_adamw_step(params, grad, state, lr, temperature, weight_decay, rng):
    """AdamW with decoupled weight decay, plus ``sqrt(2 * temperature * lr)`` Gaussian noise.

    Returns ``(new_params, new_state)``; inputs are not modified. ``rng`` is
    only consulted when ``temperature > 0``.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    t = state.step_count + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = params - lr * weight_decay * params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if temperature > 0:
        new = new + math.sqrt(2.0 * temperature * lr) * rng.standard_normal(params.shape)
    return new, AdamWState(m, v, t, state.beta1, state.beta2, state.eps)
