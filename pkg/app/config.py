"""Run configuration: defaults < CNNGA_* environment < config file < command-line flags."""

import logging
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.errors import ConfigError
from app.models import GaConfig, TrainConfig
from app.services.dataio import MIN_NETWORK_SIDE, parse_dataset_spec

logger = logging.getLogger(__name__)


class RunConfig(BaseSettings):
    """Every knob of a search run; echoed verbatim into the run directory."""
    model_config = SettingsConfigDict(env_prefix="CNNGA_", extra="forbid")

    population_size: int = Field(50, gt=0)
    max_generations: int = Field(100, ge=0)
    tournament_size: int = Field(5, gt=0)
    parents_per_generation: int = Field(10, gt=0)
    offspring_count: Optional[int] = Field(None, gt=0)
    crossover_rate: float = Field(0.6, ge=0.0, le=1.0)
    sort_conv_dims: bool = True
    seed: int = 0

    epochs: int = Field(20, gt=0)
    learning_rate: float = Field(5e-4, gt=0.0)
    batch_size: int = Field(16, gt=0)

    data: str = Field("synthetic:250:32", description="Directory with 0/ and 1/, or synthetic:<n>:<size>")
    image_size: int = Field(256, ge=MIN_NETWORK_SIDE)
    split_ratio: float = Field(0.8, gt=0.0, lt=1.0)
    split_seed: int = 0

    evaluator: Literal["cnn", "surrogate"] = "cnn"
    out: Path = Path("runs/latest")
    parallel: int = Field(1, gt=0)

    @model_validator(mode="after")
    def _trainable_input(self) -> "RunConfig":
        synthetic = parse_dataset_spec(self.data)
        if self.evaluator == "cnn" and synthetic is not None and synthetic[1] < MIN_NETWORK_SIDE:
            raise ValueError(f"synthetic image side must be at least {MIN_NETWORK_SIDE}, got {synthetic[1]}")
        return self

    def ga_config(self) -> GaConfig:
        return GaConfig(
            population_size=self.population_size,
            max_generations=self.max_generations,
            tournament_size=self.tournament_size,
            parents_per_generation=self.parents_per_generation,
            crossover_rate=self.crossover_rate,
            offspring_count=self.offspring_count,
            sort_conv_dims=self.sort_conv_dims,
            master_seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, learning_rate=self.learning_rate, batch_size=self.batch_size)

    def echo(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


def parse_config_file(path: Path) -> dict[str, str]:
    """Flat `key = value` lines; `#` starts a comment; keys may use dashes."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e

    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.partition("#")[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{path}:{number}: expected 'key = value'")
        if key not in RunConfig.model_fields:
            raise ConfigError(f"{path}:{number}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def load_config(config_file: Optional[Path] = None, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Merge file entries and flag overrides (None means 'not given') and validate everything."""
    values: dict[str, Any] = parse_config_file(config_file) if config_file else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        config = RunConfig(**values)
        config.ga_config()
        config.train_config()
    except ValidationError as e:
        raise ConfigError(f"invalid configuration:\n{e}") from e
    return config
