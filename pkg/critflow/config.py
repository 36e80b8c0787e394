"""
Experiment configuration.

A config is a YAML mapping, nested or with dotted keys:

    grid.n: 32
    mu: 1.0
    data:
      generator: random_divfree
      params: {spectrum_slope: -2, k_max: 8, target_x_minus1: 0.8}

The flat text form `grid.n = 32`, one assignment per line, is accepted as
well; values are read as YAML scalars or lists.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Iterable, Literal, Self

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data import GENERATORS
from .diagnostics import MONITORS, MonitorSettings
from .dynamics import StepperConfig

logger = logging.getLogger(__name__)

FLAT_SUFFIXES = {".cfg", ".conf", ".txt", ".ini"}

DEFAULT_MONITORS = ["dissipation", "theorem", "time_derivative", "bkm", "energy_growth"]


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(default=32, ge=8)
    box_size: float = Field(default=2 * math.pi, gt=0.0)


class DataConfig(BaseModel):
    """
    Initial datum: a registered generator with its keyword parameters, plus
    the mollification scales used by Cauchy sweeps.
    """

    model_config = ConfigDict(extra="forbid")

    generator: str = "random_divfree"
    params: dict[str, Any] = Field(default_factory=dict)
    lambdas: list[float] = Field(default_factory=list)
    mollifier: Literal["gaussian", "poisson", "cutoff"] = "gaussian"


class MonitorsConfig(MonitorSettings):
    names: list[str] = Field(default_factory=lambda: list(DEFAULT_MONITORS))

    def settings(self) -> MonitorSettings:
        return MonitorSettings(**self.model_dump(exclude={"names"}))


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: Path = Path("runs")
    checkpoint_every: int | None = Field(default=None, ge=1)


class ExperimentConfig(BaseModel):
    """Everything a run needs; see the module docstring for the file format."""

    model_config = ConfigDict(extra="forbid")

    grid: GridConfig = Field(default_factory=GridConfig)
    mu: float = Field(default=1.0, gt=0.0)
    horizon: float = Field(default=1.0, gt=0.0)
    sample_every: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0)
    data: DataConfig = Field(default_factory=DataConfig)
    stepper: StepperConfig = Field(default_factory=StepperConfig)
    monitors: MonitorsConfig = Field(default_factory=MonitorsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _cross_check(self) -> Self:
        if self.grid.n % 2:
            raise ValueError(f"grid.n must be even, got {self.grid.n}")

        if self.data.generator not in GENERATORS:
            raise ValueError(
                f"data.generator {self.data.generator!r} is not one of {sorted(GENERATORS)}"
            )

        for name in self.monitors.names:
            if name not in MONITORS:
                raise ValueError(f"monitors.names: unknown monitor {name!r}")

        k_max = self.data.params.get("k_max")
        band = (self.grid.n - 1) // 3

        if self.data.generator == "random_divfree" and k_max is not None and k_max > band:
            raise ValueError(
                f"data.params.k_max={k_max} exceeds the dealiased band {band} of grid.n={self.grid.n}"
            )

        if any(lam <= 0 for lam in self.data.lambdas):
            raise ValueError("data.lambdas must all be positive")

        # a resumed series continues from the row taken at the checkpoint
        every = self.output.checkpoint_every
        if every is not None and every % self.sample_every:
            raise ValueError(
                f"output.checkpoint_every={every} must be a multiple of sample_every={self.sample_every}"
            )

        return self

    def generator_params(self) -> dict[str, Any]:
        """Generator keyword arguments, with the run seed filled in where used."""
        params = dict(self.data.params)

        if self.data.generator == "random_divfree":
            params.setdefault("seed", self.seed)

        return params

    @property
    def subcritical(self) -> bool | None:
        """Whether the requested X^{-1} norm is below mu, when the config fixes it."""
        target = self.data.params.get("target_x_minus1")
        return None if target is None else target < self.mu


def unflatten(data: dict[str, Any]) -> dict[str, Any]:
    """Expands dotted keys (`grid.n`) into nested mappings, recursively."""
    out: dict[str, Any] = {}

    for key, value in data.items():
        if isinstance(value, dict):
            value = unflatten(value)

        node = out
        *parents, leaf = str(key).split(".")

        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"key {key!r} conflicts with scalar {part!r}")
            node = child

        if isinstance(node.get(leaf), dict) and isinstance(value, dict):
            node[leaf].update(value)
        elif leaf in node:
            raise ConfigError(f"key {key!r} given twice")
        else:
            node[leaf] = value

    return out


def parse_flat(text: str) -> dict[str, Any]:
    """Parses `key = value` lines; `#` starts a comment line."""
    data: dict[str, Any] = {}

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()

        if not line or line.startswith("#"):
            continue

        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")

        key, _, raw = line.partition("=")
        key = key.strip()

        if key in data:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")

        try:
            data[key] = yaml.safe_load(raw.strip()) if raw.strip() else None
        except yaml.YAMLError as e:
            raise ConfigError(f"line {lineno}: cannot parse value of {key!r}: {e}")

    return data


def apply_overrides(data: dict[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """Merges `key=value` overrides (dotted keys allowed) into a nested mapping."""
    flat = parse_flat("\n".join(overrides))

    def merge(base: dict[str, Any], extra: dict[str, Any]):
        for key, value in extra.items():
            if isinstance(value, dict) and isinstance(base.get(key), dict):
                merge(base[key], value)
            else:
                base[key] = value

    merged = unflatten(data)
    merge(merged, unflatten(flat))
    return merged


def validate_config(data: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(unflatten(data))
    except ValidationError as e:
        problems = []
        for err in e.errors():
            field = ".".join(str(part) for part in err["loc"]) or "config"
            problems.append(f"{field}: {err['msg']}")
        raise ConfigError("invalid configuration: " + "; ".join(problems)) from e


def parse_config(text: str, flat: bool = False) -> dict[str, Any]:
    if flat:
        return unflatten(parse_flat(text))

    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse YAML config: {e}") from e

    if data is None:
        return {}

    if not isinstance(data, dict):
        raise ConfigError(f"config must be a mapping, got {type(data).__name__}")

    return unflatten(data)


def load_config(path: str | Path, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """
    Reads and validates a config file. Files ending in .cfg, .conf, .ini or
    .txt use the flat form; everything else is YAML.

    Raises:
        ConfigError: If the file is missing, unparsable or invalid; the
            message names the offending dotted field.
    """
    path = Path(path)

    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e

    data = parse_config(text, flat=path.suffix.lower() in FLAT_SUFFIXES)
    config = validate_config(apply_overrides(data, overrides))

    logger.debug("config %s loaded: generator=%s n=%d", path, config.data.generator, config.grid.n)
    return config


def dump_config(config: ExperimentConfig) -> str:
    """Nested YAML rendering of a config, loadable by `load_config`."""
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)
