"""Experiment configuration: JSON schema, validation and desk-scale defaults."""
import json
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Optional

from .datagen import CirclesParams, MultiIndexParams
from .lora import LoraConfig
from .optim import TrainConfig


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


class Experiment(str, Enum):
    MERGE_HEATMAP = "merge_heatmap"
    LAMBDA_SWEEP = "lambda_sweep"
    STATIONARY_CHECK = "stationary_check"
    LORA_MERGE = "lora_merge"
    TRAIN = "train"


@dataclass(frozen=True)
class LoraExperiment:
    k: int = 8
    d: int = 32
    true_rank: int = 2
    n: int = 500
    noise_std: float = 1.0
    rank: int = 32
    members: int = 8
    tasks: int = 10
    optimizer: dict = field(default_factory=lambda: {"lr": 0.1, "epochs": 20})

    def lora_config(self, temperature, seed):
        return LoraConfig(**{**self.optimizer, "temperature": temperature, "seed": seed})


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run; serialises to/from JSON.

    ``task`` is ``{"kind": "circles" | "multi_index", ...generator params}``
    and ``train`` holds :class:`~mfld.optim.TrainConfig` fields (its seed is
    ignored; per-network seeds derive from ``master_seed``).
    """

    experiment: Experiment = Experiment.MERGE_HEATMAP
    master_seed: int = 0
    task: dict = field(default_factory=lambda: {"kind": "circles"})
    train_frac: float = 0.8
    scale: float = 10.0
    train: dict = field(default_factory=dict)
    n_inf: int = 2000
    n_list: tuple = (50, 100, 200)
    m_max: int = 10
    m_list: Optional[tuple] = (1, 2, 5, 10)
    subsample_repeats: int = 20
    lambdas: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    n_particles: int = 200
    input_dim: int = 1
    lora: LoraExperiment = field(default_factory=LoraExperiment)
    output_dir: str = "out"

    def __post_init__(self):
        try:
            object.__setattr__(self, "experiment", Experiment(self.experiment))
        except ValueError:
            raise ConfigError(f"unknown experiment {self.experiment!r}") from None
        for name in ("n_list", "lambdas"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.m_list is not None:
            object.__setattr__(self, "m_list", tuple(self.m_list))
        if isinstance(self.lora, dict):
            object.__setattr__(self, "lora", _build(LoraExperiment, self.lora, "lora"))
        self.validate()

    @property
    def members_to_merge(self):
        return self.m_list if self.m_list is not None else tuple(range(1, self.m_max + 1))

    def train_config(self, **overrides):
        try:
            return TrainConfig(**{**self.train, **overrides})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"train: {exc}") from None

    def task_params(self, seed):
        raw = dict(self.task)
        kind = raw.pop("kind", None)
        raw.setdefault("seed", seed)
        cls = {"circles": CirclesParams, "multi_index": MultiIndexParams}.get(kind)
        if cls is None:
            raise ConfigError(f"task.kind must be 'circles' or 'multi_index', got {kind!r}")
        return _build(cls, raw, "task")

    def validate(self):
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if not 0 < self.train_frac < 1:
            raise ConfigError("train_frac must lie in (0, 1)")
        positive = {"n_inf": self.n_inf, "m_max": self.m_max, "n_particles": self.n_particles,
                    "subsample_repeats": self.subsample_repeats, "input_dim": self.input_dim}
        for name, value in positive.items():
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not self.n_list or any(not isinstance(n, int) or n < 1 for n in self.n_list):
            raise ConfigError("n_list must be a non-empty list of positive integers")
        if any(not 1 <= m <= self.m_max for m in self.members_to_merge):
            raise ConfigError(f"m_list entries must lie in [1, m_max={self.m_max}]")
        if any(lam < 0 for lam in self.lambdas):
            raise ConfigError("lambdas must be non-negative")
        if self.experiment is Experiment.MERGE_HEATMAP and self.n_inf < max(self.n_list):
            raise ConfigError(f"n_inf={self.n_inf} is smaller than max(n_list)={max(self.n_list)}")
        if self.experiment in (Experiment.MERGE_HEATMAP, Experiment.LAMBDA_SWEEP,
                               Experiment.TRAIN):
            self.task_params(0)
        self.train_config()

    def to_dict(self):
        out = asdict(self)
        out["experiment"] = self.experiment.value
        for name in ("n_list", "lambdas", "m_list"):
            if out[name] is not None:
                out[name] = list(out[name])
        return out

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        return _build(cls, raw, "config")


def _build(cls, raw, where):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_config(path, experiment=None):
    """Read a JSON config (or a previous run's manifest).

    With ``experiment`` given, the file is layered over that experiment's
    desk-scale defaults: top-level keys replace, ``train`` and ``lora``
    merge key by key.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: configuration must be a JSON object")
    if "config" in raw and "master_seed" in raw:
        raw = raw["config"]
    if experiment is None:
        return ExperimentConfig.from_dict(raw)
    experiment = Experiment(experiment)
    if raw.get("experiment", experiment.value) != experiment.value:
        raise ConfigError(f"{path} configures {raw['experiment']!r}, "
                          f"not {experiment.value!r}")
    merged = default_config(experiment).to_dict()
    for key, value in raw.items():
        if key in ("train", "lora") and isinstance(value, dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return ExperimentConfig.from_dict(merged)


_CLASSIFICATION = {"step_size": 0.1, "temperature": 0.01, "l2": 0.1, "epochs": 200,
                   "loss": "logistic", "init_std": 1.0}
_REGRESSION = {"step_size": 0.01, "temperature": 0.01, "l2": 0.1, "epochs": 100,
               "loss": "squared_error", "init_std": 1.0}


def default_config(experiment):
    """Desk-scale configuration for ``experiment`` (the sizes CI runs)."""
    experiment = Experiment(experiment)
    base = ExperimentConfig(experiment=experiment, train=dict(_CLASSIFICATION))
    if experiment is Experiment.LAMBDA_SWEEP:
        return replace(
            base, task={"kind": "multi_index", "n": 200, "d": 20, "k": 20, "r": 5.0,
                        "label_scale": 10.0},
            train={**_REGRESSION, "epochs": 5}, n_list=(100, 200), m_max=20, m_list=None)
    if experiment is Experiment.STATIONARY_CHECK:
        return replace(base, train={**_REGRESSION, "epochs": 20000}, lambdas=(0.01, 0.02, 0.0),
                       n_particles=1000, input_dim=1)
    if experiment is Experiment.LORA_MERGE:
        return replace(base, lambdas=(1e-5,))
    return base
