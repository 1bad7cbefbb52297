"""Two-layer mean-field networks: particles, evaluation, losses, gradients.

A network with N neurons is a ``ParticleSystem`` whose parameter matrix has
one row per neuron laid out as ``(w_0, ..., w_{d-1}, b, c)``. A neuron
computes ``R * tanh(c) * tanh(w . z + b)`` and the network output is the
plain mean of its neurons, so it is bounded by ``R`` everywhere.
"""
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class LossKind(str, Enum):
    LOGISTIC = "logistic"
    SQUARED_ERROR = "squared_error"


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    """An immutable collection of N neurons sharing a scale ``R``.

    Parameters
    ----------
    params : array-like, shape (n_particles, input_dim + 2)
        One row per neuron, ordered ``(w..., b, c)``.
    scale : float
        Output bound ``R``.
    provenance : str
        Free-form tag (seed, config hash, merge history).
    """

    params: np.ndarray
    scale: float = 10.0
    provenance: str = ""

    def __post_init__(self):
        params = np.array(self.params, dtype=np.float64, copy=True, order="C")
        if params.ndim != 2 or params.shape[0] < 1 or params.shape[1] < 3:
            raise ValueError(
                f"params must have shape (N >= 1, input_dim + 2 >= 3), got {params.shape}")
        if not np.all(np.isfinite(params)):
            raise ValueError("particle parameters must be finite")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def n_particles(self):
        return self.params.shape[0]

    @property
    def input_dim(self):
        return self.params.shape[1] - 2

    @property
    def weights(self):
        return self.params[:, :-2]

    @property
    def biases(self):
        return self.params[:, -2]

    @property
    def amplitudes(self):
        return self.params[:, -1]

    def replace_params(self, params, provenance=None):
        return ParticleSystem(params, self.scale,
                              self.provenance if provenance is None else provenance)

    def __repr__(self):
        return (f"ParticleSystem(n_particles={self.n_particles}, "
                f"input_dim={self.input_dim}, scale={self.scale}, "
                f"provenance={self.provenance!r})")


def _as_inputs(z, input_dim):
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    if z2.ndim != 2 or z2.shape[1] != input_dim:
        got = z.shape[-1] if z.ndim else 0
        raise ValueError(f"input has length {got} but particles expect length {input_dim}")
    return z2, single


def _data_arrays(data):
    if isinstance(data, tuple):
        inputs, labels = data
    else:
        inputs, labels = data.inputs, data.labels
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ValueError("dataset is empty")
    if labels.shape != (inputs.shape[0],):
        raise ValueError(
            f"expected {inputs.shape[0]} scalar labels, got array of shape {labels.shape}")
    return inputs, labels


def neuron_eval(particle, z, scale):
    """Output of a single neuron ``R tanh(c) tanh(w . z + b)``."""
    particle = np.asarray(particle, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if particle.ndim != 1 or z.ndim != 1 or particle.shape[0] != z.shape[0] + 2:
        raise ValueError(
            f"input has length {z.shape[-1] if z.ndim else 0} but particle expects "
            f"length {particle.shape[-1] - 2}")
    pre = float(np.dot(particle[:-2], z)) + particle[-2]
    return scale * math.tanh(particle[-1]) * math.tanh(pre)


def neuron_outputs(system, z):
    """Per-neuron outputs, shape (n_inputs, n_particles) (or (n_particles,))."""
    z2, single = _as_inputs(z, system.input_dim)
    pre = z2 @ system.weights.T + system.biases
    out = system.scale * np.tanh(pre) * np.tanh(system.amplitudes)
    return out[0] if single else out


def network_eval(system, z):
    """Mean of the neuron outputs for one input vector or a batch of rows."""
    z2, single = _as_inputs(z, system.input_dim)
    out = neuron_outputs(system, z2).sum(axis=1) / system.n_particles
    return float(out[0]) if single else out


def _check_labels(kind, y):
    if LossKind(kind) is LossKind.LOGISTIC and not np.all(np.abs(np.asarray(y)) == 1.0):
        raise ValueError("logistic loss requires labels in {-1, +1}")


def loss_eval(kind, a, y):
    """Pointwise loss; logistic uses the overflow-safe softplus form."""
    _check_labels(kind, y)
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if LossKind(kind) is LossKind.LOGISTIC:
        v = y * a
        out = np.maximum(0.0, -v) + np.log1p(np.exp(-np.abs(v)))
    else:
        out = (a - y) ** 2
    return float(out) if out.ndim == 0 else out


def loss_deriv(kind, a, y):
    """Derivative of the loss in its first argument."""
    _check_labels(kind, y)
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if LossKind(kind) is LossKind.LOGISTIC:
        # -y / (1 + exp(y a)), written via tanh so it never overflows
        out = -y * 0.5 * (1.0 - np.tanh(0.5 * y * a))
    else:
        out = 2.0 * (a - y)
    return float(out) if out.ndim == 0 else out


def empirical_risk(system, data, kind):
    """Mean loss of the network over a dataset (``Dataset`` or ``(Z, y)``)."""
    inputs, labels = _data_arrays(data)
    losses = loss_eval(kind, network_eval(system, inputs), labels)
    return math.fsum(np.atleast_1d(losses)) / inputs.shape[0]


def accuracy(system, data):
    """Fraction of examples whose label matches the sign of the network output."""
    inputs, labels = _data_arrays(data)
    return float(np.mean(np.where(network_eval(system, inputs) >= 0, 1.0, -1.0) == labels))


def objective(system, data, kind, l2):
    """Risk plus the averaged L2 penalty ``l2 * mean_i |x_i|^2``."""
    penalty = l2 * math.fsum(np.einsum("ij,ij->i", system.params, system.params))
    return empirical_risk(system, data, kind) + penalty / system.n_particles


def first_variation_grads(system, data, kind, l2):
    """Gradient of the first variation at every particle, shape (N, input_dim + 2).

    Row i equals ``N`` times the gradient of :func:`objective` with respect
    to particle i. When ``data`` is None the risk term is dropped and only
    the regulariser ``2 * l2 * x`` remains.
    """
    grads = 2.0 * l2 * system.params
    if data is None:
        return grads
    inputs, labels = _data_arrays(data)
    if inputs.shape[1] != system.input_dim:
        raise ValueError(
            f"input has length {inputs.shape[1]} but particles expect length {system.input_dim}")
    n = inputs.shape[0]
    act = np.tanh(inputs @ system.weights.T + system.biases)  # (n, N)
    amp = np.tanh(system.amplitudes)
    outputs = (system.scale * act * amp).sum(axis=1) / system.n_particles
    g = loss_deriv(kind, outputs, labels) / n
    dact = 1.0 - act * act
    gd = g @ dact  # sum_j g_j sech^2(pre_ji)
    R = system.scale
    grads[:, :-2] += (R * amp)[:, None] * ((g[:, None] * dact).T @ inputs)
    grads[:, -2] += R * amp * gd
    grads[:, -1] += R * (1.0 - amp * amp) * (g @ act)
    return grads


def first_variation_grad(system, data, kind, l2, i):
    """Gradient of the first variation at particle ``i`` only."""
    if not 0 <= i < system.n_particles:
        raise IndexError(f"particle index {i} out of range for N={system.n_particles}")
    return first_variation_grads(system, data, kind, l2)[i]
