"""
Experiment configuration.

Experiments are described by TOML files with one table per section::

    [network]
    devices = 10
    topology = "complete"

    [training]
    algorithm = "cd-bfl"
    local_steps = 8

Every key has a default that mirrors the reference experimental setting
(K = 10 devices on a complete graph, eta = 1e-4, T = 800, T_b = 700,
zeta = 0.03, L = 8, top-k keeping 1% of the parameters). Unknown keys are
rejected.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import toml

from ..compression import CompressorConfig, CompressorKind
from ..core import ArgumentError, CompressedBFLError
from ..models import ModelKind, ModelSpec
from ..network import GraphKind
from ..samplers import Algorithm, HyperParams


class ConfigError(CompressedBFLError):
    """Error for invalid experiment configurations"""


SWEEP_ALIASES = {
    "L": "training.local_steps",
    "zeta": "training.zeta",
    "eta": "training.learning_rate",
    "ratio": "compression.ratio",
    "K": "network.devices",
    "seed": "seeds.seed",
    "algorithm": "training.algorithm",
}


@dataclass(frozen=True)
class ModelConfig:
    kind: str = ModelKind.SOFTMAX_LINEAR.value
    hidden: int = 16
    init_std: float = 0.1


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    classes: int = 10
    input_dim: int = 19
    train_per_class: int = 50
    validation_per_class: int = 20
    test_per_class: int = 20
    spread: float = 2.0
    noise_std: float = 1.0
    csv_path: Optional[str] = None
    test_csv_path: Optional[str] = None
    validation_fraction: float = 0.2
    test_fraction: float = 0.2


@dataclass(frozen=True)
class PartitionConfig:
    mode: str = "iid"
    classes_per_device: int = 2


@dataclass(frozen=True)
class NetworkConfig:
    devices: int = 10
    topology: str = GraphKind.COMPLETE.value
    edge_prob: float = 0.5


@dataclass(frozen=True)
class TrainingConfig:
    algorithm: str = Algorithm.CDBFL.value
    learning_rate: float = 1e-4
    rounds: int = 800
    burn_in: int = 700
    local_steps: int = 8
    zeta: float = 0.03
    batch_size: int = 16
    thinning: int = 1
    temperature: float = 1.0
    prior_share: Optional[float] = None
    unbiased: bool = False
    workers: int = 1
    ensemble_cap: Optional[int] = None


@dataclass(frozen=True)
class CompressionConfig:
    kind: str = CompressorKind.TOP_K.value
    ratio: float = 0.01
    levels: int = 1


@dataclass(frozen=True)
class EvaluationConfig:
    bins: int = 10
    every: int = 1
    label_filter: list = field(default_factory=list)
    shift_noise: list = field(default_factory=list)


@dataclass(frozen=True)
class SeedConfig:
    seed: int = 0
    data_seed: Optional[int] = None


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    format: str = "csv"
    spill_ensembles: bool = False


SECTIONS = {
    "model": ModelConfig,
    "data": DataConfig,
    "partition": PartitionConfig,
    "network": NetworkConfig,
    "training": TrainingConfig,
    "compression": CompressionConfig,
    "evaluation": EvaluationConfig,
    "seeds": SeedConfig,
    "output": OutputConfig,
}


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    """Coerce override strings and TOML integers to the type of the default."""
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() not in ("true", "false"):
                raise ConfigError(f"{section}.{key} expects true/false, got {value!r}")
            return value.lower() == "true"
        return bool(value)
    if isinstance(default, list):
        if isinstance(value, str):
            return [_parse_scalar(v) for v in value.split(",") if v.strip()]
        return list(value)
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{section}.{key}: cannot interpret {value!r}") from e
    if default is None and isinstance(value, str):
        return _parse_scalar(value)
    return value


def _parse_scalar(text: str) -> Any:
    text = text.strip()
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        sections = {}
        for name, values in data.items():
            if name not in SECTIONS:
                raise ConfigError(f"Unknown configuration section [{name}]")
            if not isinstance(values, dict):
                raise ConfigError(f"Section [{name}] must be a table")
            section_cls = SECTIONS[name]
            defaults = section_cls()
            known = {f.name for f in fields(section_cls)}
            unknown = set(values) - known
            if unknown:
                raise ConfigError(f"Unknown key(s) in [{name}]: {sorted(unknown)}")
            sections[name] = section_cls(
                **{
                    key: _coerce(name, key, value, getattr(defaults, key))
                    for key, value in values.items()
                }
            )
        config = cls(**sections)
        config.validate()
        return config

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Configuration file not found: {path}")
        try:
            data = toml.load(path)
        except toml.TomlDecodeError as e:
            raise ConfigError(f"Invalid TOML in {path}: {e}") from e
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_toml(self) -> str:
        return toml.dumps(
            {
                name: {k: v for k, v in section.items() if v is not None}
                for name, section in self.to_dict().items()
            }
        )

    @property
    def config_hash(self) -> str:
        """SHA-256 of every section that influences results ([output] excluded)."""
        settings = {k: v for k, v in self.to_dict().items() if k != "output"}
        canonical = json.dumps(settings, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        """Return a copy with dotted keys (``training.local_steps``) replaced."""
        updated = self
        for dotted, value in overrides.items():
            dotted = SWEEP_ALIASES.get(dotted, dotted)
            if dotted.count(".") != 1:
                raise ConfigError(f"Override key must look like section.key, got {dotted!r}")
            name, key = dotted.split(".")
            if name not in SECTIONS:
                raise ConfigError(f"Unknown configuration section [{name}]")
            section = getattr(updated, name)
            if key not in {f.name for f in fields(section)}:
                raise ConfigError(f"Unknown key {key!r} in [{name}]")
            default = getattr(SECTIONS[name](), key)
            section = replace(section, **{key: _coerce(name, key, value, default)})
            updated = replace(updated, **{name: section})
        updated.validate()
        return updated

    @property
    def data_seed(self) -> int:
        return self.seeds.seed if self.seeds.data_seed is None else self.seeds.data_seed

    def validate(self):
        """Check enumerations, files and cross-field constraints."""
        try:
            ModelKind(self.model.kind)
            GraphKind(self.network.topology)
            Algorithm(self.training.algorithm)
            self.compressor()
            self.hyper_params()
        except (ValueError, ArgumentError) as e:
            raise ConfigError(str(e)) from e
        if self.data.source not in ("synthetic", "csv"):
            raise ConfigError(f"data.source must be 'synthetic' or 'csv', got {self.data.source!r}")
        if self.data.source == "csv":
            if not self.data.csv_path:
                raise ConfigError("data.csv_path is required when data.source = 'csv'")
            for path in (self.data.csv_path, self.data.test_csv_path):
                if path and not Path(path).is_file():
                    raise ConfigError(f"Referenced dataset file does not exist: {path}")
        if self.partition.mode not in ("iid", "label-skew"):
            raise ConfigError(f"partition.mode must be 'iid' or 'label-skew', got {self.partition.mode!r}")
        if self.network.devices < 1:
            raise ConfigError(f"network.devices must be positive, got {self.network.devices}")
        if (
            self.network.devices == 1
            and Algorithm(self.training.algorithm) is not Algorithm.SGLD
            and self.network.topology != GraphKind.COMPLETE.value
        ):
            raise ConfigError("A single device only supports the (trivial) complete topology")
        if self.evaluation.bins < 1 or self.evaluation.every < 1:
            raise ConfigError("evaluation.bins and evaluation.every must be positive")
        if self.data.source == "synthetic":
            self.check_label_filter(self.data.classes)
        if any(float(s) < 0 for s in self.evaluation.shift_noise):
            raise ConfigError("evaluation.shift_noise values must be non-negative")
        if self.output.format not in ("csv", "json"):
            raise ConfigError(f"output.format must be 'csv' or 'json', got {self.output.format!r}")

    def check_label_filter(self, classes: int):
        bad = [y for y in self.evaluation.label_filter if not 0 <= int(y) < classes]
        if bad:
            raise ConfigError(f"evaluation.label_filter {bad} outside [0, {classes})")

    def hyper_params(self) -> HyperParams:
        t = self.training
        return HyperParams(
            eta=t.learning_rate,
            rounds=t.rounds,
            burn_in=t.burn_in,
            local_steps=t.local_steps,
            zeta=t.zeta,
            batch_size=t.batch_size,
            thinning=t.thinning,
            temperature=t.temperature,
            prior_share=t.prior_share,
            unbiased=t.unbiased,
        )

    def compressor(self) -> CompressorConfig:
        c = self.compression
        return CompressorConfig(CompressorKind(c.kind), c.ratio, c.levels)

    def model_spec(self, input_dim: int, classes: int) -> ModelSpec:
        return ModelSpec(ModelKind(self.model.kind), input_dim, classes, self.model.hidden)

    @property
    def algorithm(self) -> Algorithm:
        return Algorithm(self.training.algorithm)
