"""Run configuration: key=value (or YAML) files layered under environment overrides."""

import dataclasses
import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv

from cascadeseg.errors import ConfigError
from cascadeseg.metrics.base import MetricConfig
from cascadeseg.network.params import DEFAULT_ENCODER_CHANNELS, CascadeConfig
from cascadeseg.training.train_config import TrainConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
DEFAULT_CONFIG_PATH = DEFAULT_CONFIG_DIR / "default.cfg"
ENV_PREFIX = "CASCADESEG_"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # optimizer / loop
    lr: float = 0.005
    momentum: float = 0.9
    weight_decay: float = 5e-5
    iterations: int = 200
    batch: int = 4
    image_size: int = 64
    train_samples: int = 64
    holdout_samples: int = 16
    log_every: int = 20
    # network
    q: int = 2
    unified_channels: int = 32
    encoder_channels: tuple[int, ...] = DEFAULT_ENCODER_CHANNELS
    # metrics
    beta2: float = 0.3
    gamma: float = 0.5
    gt_binarize: float = 0.5
    thresholds: int = 256
    # runtime
    workers: int = 4
    log_level: str = "INFO"
    log_file: str = ""

    def __post_init__(self):
        if self.log_level not in LOG_LEVELS:
            raise ConfigError(f"log_level must be one of {', '.join(LOG_LEVELS)}, got {self.log_level!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        self.training()
        self.metrics()

    def cascade(self) -> CascadeConfig:
        return CascadeConfig(q=self.q, unified_channels=self.unified_channels, encoder_channels=self.encoder_channels)

    def training(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            iterations=self.iterations,
            batch=self.batch,
            seed=self.seed,
            image_size=self.image_size,
            cascade=self.cascade(),
            train_samples=self.train_samples,
            holdout_samples=self.holdout_samples,
            log_every=self.log_every,
        )

    def metrics(self) -> MetricConfig:
        return MetricConfig(
            beta2=self.beta2, gamma=self.gamma, num_thresholds=self.thresholds, gt_binarize=self.gt_binarize
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, value: Any) -> Any:
    """Convert a raw value to the type of the field's default."""
    default = _FIELDS[key].default
    try:
        if isinstance(default, tuple):
            items = value.split(",") if isinstance(value, str) else list(value)
            return tuple(int(str(v).strip()) for v in items if str(v).strip())
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(str(value).strip()) if isinstance(value, str) else int(value)
        if isinstance(default, float):
            return float(value)
        return "" if value is None else str(value).strip()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{key}: invalid value {value!r}") from e


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _coerce(key, value)
        except ConfigError as e:
            raise ConfigError(f"{source}:{lineno}: {e}") from e
    return RunConfig(**values)


def _format_value(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    """Every key in field order, one per line."""
    lines = [f"{name}={_format_value(getattr(cfg, name))}" for name in _FIELDS]
    return "\n".join(lines) + "\n"


def _read_yaml(path: Path) -> dict[str, Any]:
    with open(path, "r") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat mapping of settings")
    values = {}
    for key, value in data.items():
        if key not in _FIELDS:
            raise ConfigError(f"{path}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def _env_overrides() -> dict[str, Any]:
    overrides = {}
    for name in _FIELDS:
        raw = os.getenv(ENV_PREFIX + name.upper())
        if raw is not None:
            overrides[name] = _coerce(name, raw)
    return overrides


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load a run config file, then apply CASCADESEG_<KEY> environment overrides.

    Without a path the shipped config/default.cfg is used when present.
    """
    if path is None:
        path = DEFAULT_CONFIG_PATH if DEFAULT_CONFIG_PATH.exists() else None
    path = Path(path) if path is not None else None
    if path is not None and not path.is_file():
        raise ConfigError(f"{path}: config file not found")

    values: dict[str, Any] = {}
    if path is not None:
        if path.suffix.lower() in (".yaml", ".yml"):
            values = _read_yaml(path)
        else:
            values = dataclasses.asdict(parse_config(path.read_text(), source=str(path)))

    # .env next to the config file wins over the working directory's;
    # override=True so .env values replace stale shell variables
    candidates = ([path.parent / ".env"] if path is not None else []) + [Path.cwd() / ".env"]
    for env_path in candidates:
        if env_path.exists():
            load_dotenv(env_path, override=True)
            break

    overrides = _env_overrides()
    if overrides:
        logger.debug("Environment overrides: %s", ", ".join(sorted(overrides)))
    values.update(overrides)
    return RunConfig(**values)
