"""Experiment configuration: schema, defaults, validation, overrides and echo.

Config files are YAML or JSON documents whose sections mirror
:class:`ExperimentConfig`. Unknown keys are rejected. Floats accept the
strings ``"inf"``/``"Infinity"`` (e.g. ``dp.clip: inf`` disables clipping).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .aggregators import AggregatorConfig, admissibility_error
from .attacks import AttackConfig
from .errors import ConfigurationError
from .sparse_dp import DPConfig
from .trainer import TrainerConfig

DATASET_KINDS = ("synthetic", "idx", "csv")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "logistic"
    hidden_dim: int = 32
    init_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("logistic", "mlp1"):
            raise ConfigurationError(f"expected 'logistic' or 'mlp1', got {self.kind!r}", "model.kind")
        if self.hidden_dim < 1:
            raise ConfigurationError("must be >= 1", "model.hidden_dim")


@dataclass(frozen=True)
class PartitionConfig:
    scheme: str = "iid"
    alpha: float = 1.0

    def __post_init__(self):
        if self.scheme not in ("iid", "dirichlet"):
            raise ConfigurationError(f"expected 'iid' or 'dirichlet', got {self.scheme!r}", "partition.scheme")
        if not self.alpha > 0:
            raise ConfigurationError(f"must be > 0, got {self.alpha}", "partition.alpha")


@dataclass(frozen=True)
class DatasetConfig:
    """Data source. Which keys matter depends on ``kind``.

    ``synthetic`` uses the mixture parameters; ``idx`` the four image/label
    paths; ``csv`` the two CSV paths. Without a test file a holdout of
    ``test_fraction`` is split off the training data.
    """

    kind: str = "synthetic"
    num_classes: int = 10
    dim: int = 20
    train_size: int = 10000
    test_size: int = 2000
    separation: float = 1.0
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_csv: str | None = None
    test_csv: str | None = None
    label_column: str = "label"
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigurationError(f"expected one of {DATASET_KINDS}, got {self.kind!r}", "dataset.kind")
        if self.kind == "idx" and not (self.train_images and self.train_labels):
            raise ConfigurationError("idx datasets need train_images and train_labels", "dataset")
        if self.kind == "idx" and bool(self.test_images) != bool(self.test_labels):
            raise ConfigurationError("give both test_images and test_labels or neither", "dataset")
        if self.kind == "csv" and not self.train_csv:
            raise ConfigurationError("csv datasets need train_csv", "dataset.train_csv")
        if self.kind == "synthetic":
            for name in ("num_classes", "dim", "train_size", "test_size"):
                if getattr(self, name) < (2 if name == "num_classes" else 1):
                    raise ConfigurationError(f"out of range: {getattr(self, name)}", f"dataset.{name}")
        if not 0 < self.test_fraction < 1:
            raise ConfigurationError(f"must lie in (0, 1), got {self.test_fraction}", "dataset.test_fraction")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run. Together with ``seed`` it fixes the output bit for bit.

    ``workers`` > 1 trains clients on a thread pool; results do not change.
    ``diagnostic_reps`` > 0 evaluates the variance decomposition every round
    (requires ``tau == 1`` and ``s == n``).
    """

    seed: int = 0
    n: int = 200
    s: int = 20
    T: int = 60
    byz_fraction: float = 0.0
    workers: int = 1
    record_wall_time: bool = False
    diagnostic_reps: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    dp: DPConfig = field(default_factory=DPConfig)
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigurationError("must be >= 0", "seed")
        if self.n < 1:
            raise ConfigurationError(f"must be >= 1, got {self.n}", "n")
        if not 1 <= self.s:
            raise ConfigurationError(f"must be >= 1, got {self.s}", "s")
        if self.s > self.n:
            raise ConfigurationError(f"clients per round s={self.s} exceeds population n={self.n}", "s, n")
        if self.T < 0:
            raise ConfigurationError(f"must be >= 0, got {self.T}", "T")
        if not 0 <= self.byz_fraction < 0.5:
            raise ConfigurationError(
                f"must lie in [0, 0.5) (Byzantine clients must be fewer than half), got {self.byz_fraction}",
                "byz_fraction",
            )
        if self.workers < 1:
            raise ConfigurationError("must be >= 1", "workers")
        if self.diagnostic_reps < 0:
            raise ConfigurationError("must be >= 0", "diagnostic_reps")
        if self.diagnostic_reps > 0:
            if self.s != self.n:
                raise ConfigurationError("the variance diagnostic needs full participation (s == n)", "diagnostic_reps")
            if self.trainer.tau != 1 or self.trainer.local_epochs:
                raise ConfigurationError("the variance diagnostic needs tau == 1", "diagnostic_reps")
        reason = admissibility_error(self.aggregator.rule, self.s, self.aggregator.f)
        if reason:
            raise ConfigurationError(reason, "aggregator.f, s")

    @property
    def n_byzantine(self) -> int:
        return int(round(self.byz_fraction * self.n))

    @property
    def target_rule(self) -> str:
        return self.attack.target_rule or self.aggregator.rule

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-path changes, e.g. ``replace(**{"dp.sigma": 0.5})``."""
        return from_dict(apply_overrides(self.to_dict(), changes))


_SECTIONS = {
    "model": ModelConfig,
    "trainer": TrainerConfig,
    "dp": DPConfig,
    "aggregator": AggregatorConfig,
    "attack": AttackConfig,
    "partition": PartitionConfig,
    "dataset": DatasetConfig,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def _coerce(value, default, path):
    """Convert ``value`` to the type of the field default (None defaults accept str/None)."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"expected true/false, got {value!r}", path)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigurationError(f"expected an integer, got {value!r}", path)
        return int(value)
    if isinstance(default, float):
        if isinstance(value, str):
            # YAML 1.1 reads exponents without a dot (1e-5) as strings
            try:
                value = float(value.strip().lower().replace(".inf", "inf"))
            except ValueError:
                raise ConfigurationError(f"expected a number, got {value!r}", path) from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"expected a number, got {value!r}", path)
        if math.isnan(value):
            raise ConfigurationError("NaN is not allowed", path)
        return float(value)
    if isinstance(default, str) or default is None:
        if value is not None and not isinstance(value, str):
            raise ConfigurationError(f"expected a string, got {value!r}", path)
        return value
    raise ConfigurationError(f"unsupported value {value!r}", path)


def _build(cls, data, prefix=""):
    if not isinstance(data, dict):
        raise ConfigurationError(f"expected a mapping, got {type(data).__name__}", prefix or "<root>")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {unknown}", prefix or "<root>")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        path = f"{prefix}{name}"
        if name in _SECTIONS and cls is ExperimentConfig:
            kwargs[name] = _build(_SECTIONS[name], value, f"{path}.")
        else:
            kwargs[name] = _coerce(value, getattr(defaults, name), path)
    return cls(**kwargs)


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data)


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value", "--override")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw) if raw.strip() else None


def apply_overrides(data: dict, overrides: dict) -> dict:
    """Return a copy of ``data`` with dotted keys set to the given values."""
    data = json.loads(json.dumps(data))
    for key, value in overrides.items():
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(f"{part!r} is not a section", key)
            node = child
        node[parts[-1]] = value
    return data


def load_config(path, overrides: dict | None = None, seed: int | None = None) -> ExperimentConfig:
    """Load, override and validate a config file.

    ``overrides`` maps dotted keys to values and wins over the file; ``seed``
    wins over both.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}", str(path)) from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"parse error: {exc}", str(path)) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("top level must be a mapping", str(path))
    data = apply_overrides(data, dict(overrides or {}))
    if seed is not None:
        data["seed"] = seed
    return from_dict(data)


def write_echo(config: ExperimentConfig, path) -> None:
    """Write the fully resolved config as JSON; loading it back reproduces the run."""
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
