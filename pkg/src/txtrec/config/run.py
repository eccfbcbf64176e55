"""Run configuration: packaged defaults, user YAML files and flag overrides."""

from __future__ import annotations

import copy
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from datetime import datetime
from importlib.resources import files
from pathlib import Path
from typing import Any

import yaml

from txtrec.data.context import ContextSchema
from txtrec.data.records import parse_timestamp
from txtrec.data.vocab import VocabSet
from txtrec.errors import ConfigError
from txtrec.models import MODEL_KINDS, config_for
from txtrec.serve.server import EndpointConfig
from txtrec.train.loop import TrainConfig

logger = logging.getLogger(__name__)

_CONFIG_PACKAGE = "txtrec.config"
DEFAULTS_FILE = "defaults.yaml"
RUN_CONFIG_FILE = "run_config.yaml"

# Keys a run file may carry besides those in the packaged defaults.
_RUN_KEYS: dict[str, Any] = {
    "command": None,
    "paths": {"data": None, "out": None},
    "bundle": {"version": None, "created": None},
}


def load_defaults() -> dict[str, Any]:
    """The packaged default configuration as a nested mapping."""
    text = files(_CONFIG_PACKAGE).joinpath(DEFAULTS_FILE).read_text(encoding="utf-8")
    data: dict[str, Any] = yaml.safe_load(text)
    return {**copy.deepcopy(_RUN_KEYS), **data}


def merge(base: Mapping[str, Any], override: Mapping[str, Any], where: str = "") -> dict[str, Any]:
    """Overlay ``override`` on ``base``; every override key must exist in ``base``.

    Raises:
        ConfigError: On an unknown key or a mapping replaced by a scalar.
    """
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        dotted = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"Unknown configuration key {dotted!r}")
        if isinstance(base[key], Mapping):
            if not isinstance(value, Mapping):
                raise ConfigError(f"Configuration key {dotted!r} must be a mapping")
            merged[key] = merge(base[key], value, f"{dotted}.")
        else:
            merged[key] = value
    return merged


def set_dotted(data: dict[str, Any], dotted: str, value: Any) -> None:
    """Set ``a.b.c`` in a nested mapping; the path must already exist.

    Raises:
        ConfigError: If any part of the path is unknown.
    """
    *parents, leaf = dotted.split(".")
    node = data
    for part in parents:
        child = node.get(part)
        if not isinstance(child, dict):
            raise ConfigError(f"Unknown configuration key {dotted!r}")
        node = child
    if leaf not in node:
        raise ConfigError(f"Unknown configuration key {dotted!r}")
    node[leaf] = value


@dataclass(frozen=True)
class DataSettings:
    """How transactions become examples."""

    seq_len: int = 5
    min_count: int = 1
    valid_cutoff: str | None = None
    all_prefixes: bool = False
    context: ContextSchema = field(default_factory=ContextSchema)

    def __post_init__(self) -> None:
        if self.seq_len < 1:
            raise ConfigError(f"data.seq_len must be positive, got {self.seq_len}")
        if self.min_count < 1:
            raise ConfigError(f"data.min_count must be positive, got {self.min_count}")
        if self.valid_cutoff is not None:
            try:
                parse_timestamp(self.valid_cutoff)
            except ValueError as e:
                raise ConfigError(f"data.valid_cutoff is not an ISO-8601 time: {e}") from e

    @property
    def cutoff(self) -> datetime | None:
        return parse_timestamp(self.valid_cutoff) if self.valid_cutoff else None


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI run needs, resolved from defaults, file and flags.

    Attributes:
        command: CLI command that produced this configuration.
        data_path: Transaction CSV or ``preprocess`` directory.
        out_dir: Output directory of the run.
        data: Example preparation settings.
        model_kind: One of ``txtrec.models.MODEL_KINDS``.
        model_options: Hyperparameters per model kind.
        train: Optimization settings; ``train.seed`` is the run's seed.
        serve: Endpoint settings.
        version_tag: Fixed bundle version tag; derived from the content if unset.
        created: Fixed ISO-8601 bundle creation time; the newest training
            order's time if unset.
    """

    command: str | None = None
    data_path: str | None = None
    out_dir: str | None = None
    data: DataSettings = field(default_factory=DataSettings)
    model_kind: str = "txt"
    model_options: dict[str, dict[str, Any]] = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    serve: EndpointConfig = field(default_factory=EndpointConfig)
    version_tag: str | None = None
    created: str | None = None

    def __post_init__(self) -> None:
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(
                f"model.kind must be one of {list(MODEL_KINDS)}, got {self.model_kind!r}"
            )
        if self.created is not None:
            try:
                parse_timestamp(self.created)
            except ValueError as e:
                raise ConfigError(f"bundle.created is not an ISO-8601 time: {e}") from e

    @property
    def created_at(self) -> datetime | None:
        return parse_timestamp(self.created) if self.created else None

    @property
    def seed(self) -> int:
        return self.train.seed

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RunConfig:
        """Build from a fully merged mapping (see :func:`load_run_config`)."""
        try:
            data_section = dict(data["data"])
            context = ContextSchema.from_dict(data_section.pop("context"))
            if data_section.get("valid_cutoff") is not None:
                # YAML reads unquoted dates as date objects
                data_section["valid_cutoff"] = str(data_section["valid_cutoff"])
            bundle = data["bundle"]
            version, created = bundle["version"], bundle["created"]
            return cls(
                command=data.get("command"),
                data_path=data["paths"]["data"],
                out_dir=data["paths"]["out"],
                data=DataSettings(**data_section, context=context),
                model_kind=str(data["model"]["kind"]),
                model_options={k: dict(v) for k, v in data["model"]["options"].items()},
                train=TrainConfig.from_dict(dict(data["train"])),
                serve=EndpointConfig(**data["serve"]),
                version_tag=str(version) if version is not None else None,
                created=str(created) if created is not None else None,
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Incomplete or malformed configuration: {e}") from e

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "paths": {"data": self.data_path, "out": self.out_dir},
            "data": {
                "seq_len": self.data.seq_len,
                "min_count": self.data.min_count,
                "valid_cutoff": self.data.valid_cutoff,
                "all_prefixes": self.data.all_prefixes,
                "context": self.data.context.to_dict(),
            },
            "model": {"kind": self.model_kind, "options": copy.deepcopy(self.model_options)},
            "train": self.train.to_dict(),
            "serve": {
                "host": self.serve.host,
                "port": self.serve.port,
                "timeout": self.serve.timeout,
            },
            "bundle": {"version": self.version_tag, "created": self.created},
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def write(self, directory: Path) -> Path:
        """Write ``run_config.yaml`` into ``directory``; returns its path."""
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / RUN_CONFIG_FILE
        path.write_text(self.to_yaml(), encoding="utf-8")
        return path

    def model_config(self, vocabs: VocabSet) -> Any:
        """Model hyperparameters for ``model_kind``, sized to the vocabularies."""
        options = self.model_options.get(self.model_kind, {})
        return config_for(
            self.model_kind,
            {
                "item_vocab_size": len(vocabs.items),
                "context_fields": vocabs.context_fields(),
                "seq_len": self.data.seq_len,
                **options,
            },
        )


def read_config_file(path: Path) -> dict[str, Any]:
    """Parse a YAML configuration file.

    Raises:
        ConfigError: If the file is unreadable, not YAML or not a mapping.
    """
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a mapping")
    return data


def load_run_config(
    path: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Resolve a run configuration.

    Precedence, lowest first: packaged defaults, the YAML file at ``path``,
    then ``overrides`` given as dotted keys (``"train.epochs"``). Overrides
    whose value is None are ignored, so unset flags keep file values.

    Raises:
        ConfigError: On an unknown key or an invalid value.
    """
    merged = load_defaults()
    if path is not None:
        merged = merge(merged, read_config_file(path))
        logger.info("Loaded configuration from %s", path)
    for dotted, value in (overrides or {}).items():
        if value is not None:
            set_dotted(merged, dotted, value)
    return RunConfig.from_dict(merged)
