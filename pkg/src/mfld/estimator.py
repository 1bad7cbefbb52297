"""scikit-learn estimators wrapping MFLD training and LoRA fine-tuning.

These compose with pipelines, ``clone`` and model selection. Merging works
on fitted estimators: :func:`merge_estimators` returns a fitted estimator
whose network is the particle union of the inputs.
"""
import copy

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import ensemble, lora
from .core import LossKind, network_eval
from .datagen import Dataset
from .optim import TrainConfig, init_system, train


def _resolve_seed(random_state):
    if random_state is None:
        return int(np.random.default_rng().integers(0, 2 ** 63))
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    raise ValueError(f"random_state must be an int or None, got {random_state!r}")


class _MeanFieldNetwork(BaseEstimator):
    _loss = None

    def __init__(self, n_particles=200, scale=10.0, step_size=0.1, temperature=0.01,
                 l2=0.1, n_epochs=200, init_std=1.0, random_state=0):
        self.n_particles = n_particles
        self.scale = scale
        self.step_size = step_size
        self.temperature = temperature
        self.l2 = l2
        self.n_epochs = n_epochs
        self.init_std = init_std
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(step_size=self.step_size, temperature=self.temperature, l2=self.l2,
                           epochs=self.n_epochs, loss=self._loss,
                           seed=_resolve_seed(self.random_state), init_std=self.init_std)

    def _fit_targets(self, X, targets):
        cfg = self._train_config()
        data = Dataset(X, targets)
        system = init_system(self.n_particles, X.shape[1], self.scale, cfg,
                             provenance=f"seed={cfg.seed}")
        self.system_, self.trajectory_ = train(system, data, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def _raw_output(self, X):
        check_is_fitted(self, "system_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, but {type(self).__name__} "
                             f"is expecting {self.n_features_in_} features as input")
        return network_eval(self.system_, X)


class MeanFieldClassifier(ClassifierMixin, _MeanFieldNetwork):
    """Binary classifier: a mean-field tanh network trained on the logistic loss.

    Parameters
    ----------
    n_particles : int
        Number of neurons N.
    scale : float
        Output bound R of every neuron.
    step_size, temperature, l2 : float
        MFLD step size, entropy coefficient and L2 coefficient.
    n_epochs : int
        Number of full-batch noisy gradient steps.
    init_std : float
        Standard deviation of the Gaussian initialisation.
    random_state : int or None
        Seed for initialisation and Langevin noise.
    """

    _loss = LossKind.LOGISTIC

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] != 2:
            raise ValueError(f"expected exactly 2 classes, got {self.classes_.shape[0]}")
        signed = np.where(y == self.classes_[1], 1.0, -1.0)
        return self._fit_targets(X, signed)

    def decision_function(self, X):
        return self._raw_output(X)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores >= 0).astype(int)]

    def predict_proba(self, X):
        p = 0.5 * (1.0 + np.tanh(0.5 * self.decision_function(X)))
        return np.column_stack([1.0 - p, p])


class MeanFieldRegressor(RegressorMixin, _MeanFieldNetwork):
    """Regressor: a mean-field tanh network trained on the squared error.

    Takes the same parameters as :class:`MeanFieldClassifier`; the
    regression setting in the experiments uses ``step_size=0.01``.
    """

    _loss = LossKind.SQUARED_ERROR

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        return self._fit_targets(X, y)

    def predict(self, X):
        return self._raw_output(X)


def merge_estimators(estimators):
    """Merge fitted mean-field estimators of one type into a single fitted estimator."""
    estimators = list(estimators)
    if not estimators:
        raise ValueError("need at least one estimator")
    for est in estimators:
        check_is_fitted(est, "system_")
        if type(est) is not type(estimators[0]):
            raise TypeError("cannot merge estimators of different types")
        if hasattr(est, "classes_") and not np.array_equal(est.classes_, estimators[0].classes_):
            raise ValueError("cannot merge classifiers trained on different classes")
    merged = copy.deepcopy(estimators[0])
    merged.system_ = ensemble.merge(e.system_ for e in estimators)
    merged.trajectory_ = []
    return merged


class NoisyLoraRegressor(RegressorMixin, BaseEstimator):
    """Rank-``rank`` adapter on a frozen linear map ``base_weight`` (k x d).

    ``fit(X, Y)`` trains ``(A, B)`` with noisy AdamW on the mean squared
    error; ``predict`` returns ``X W0^T + gamma (X A^T) B^T``.
    """

    def __init__(self, base_weight=None, rank=32, lr=0.1, temperature=1e-5, n_epochs=20,
                 l2=1e-4, weight_decay=0.0, init_std=1.0, random_state=0):
        self.base_weight = base_weight
        self.rank = rank
        self.lr = lr
        self.temperature = temperature
        self.n_epochs = n_epochs
        self.l2 = l2
        self.weight_decay = weight_decay
        self.init_std = init_std
        self.random_state = random_state

    def fit(self, X, Y):
        X, Y = check_X_y(X, Y, dtype=np.float64, multi_output=True, y_numeric=True)
        Y2 = Y.reshape(len(Y), -1)
        base = (np.zeros((Y2.shape[1], X.shape[1])) if self.base_weight is None
                else np.asarray(self.base_weight, dtype=np.float64))
        if base.shape != (Y2.shape[1], X.shape[1]):
            raise ValueError(f"base_weight has shape {base.shape}, data implies "
                             f"{(Y2.shape[1], X.shape[1])}")
        cfg = lora.LoraConfig(lr=self.lr, temperature=self.temperature, epochs=self.n_epochs,
                              l2=self.l2, weight_decay=self.weight_decay,
                              init_std=self.init_std, seed=_resolve_seed(self.random_state))
        self.base_ = base
        self.adapter_ = lora.finetune(base, Dataset(X, Y2), self.rank, cfg)
        self.delta_ = self.adapter_.delta()
        self.n_features_in_ = X.shape[1]
        self._single_output = Y.ndim == 1
        return self

    def predict(self, X):
        check_is_fitted(self, "delta_")
        X = check_array(X, dtype=np.float64)
        out = X @ (self.base_ + self.delta_).T
        return out[:, 0] if self._single_output else out


def merge_lora_estimators(estimators):
    """Average fitted adapters into one dense update (no extra inference cost)."""
    estimators = list(estimators)
    for est in estimators:
        check_is_fitted(est, "delta_")
    merged = copy.deepcopy(estimators[0])
    merged.delta_ = ensemble.lora_merge(e.adapter_ for e in estimators)
    return merged
