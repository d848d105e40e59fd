"""Run configuration: every hyperparameter of the pipeline with the reference
defaults, plus a flat `key = value` config-file format.

CLI flags override config-file values; the resolved configuration is written
next to every command's outputs so a run can always be reproduced.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .layers import ModelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    """Unreadable or inconsistent run configuration."""


@dataclass
class RunConfig:
    data: str = ""
    out: str = "out"
    seed: int = 42
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    vocab_size: int = 10_000
    max_len: int = 100
    embedding_dim: int = 128
    conv_filters: int = 128
    kernel_size: int = 5
    pool_size: int = 2
    gru_units: int = 128
    attention_width: int = 64
    dropout: float = 0.5
    learning_rate: float = 0.001
    epochs: int = 40
    batch_size: int = 512
    patience: int = 4

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            vocab_size=self.vocab_size,
            max_len=self.max_len,
            embedding_dim=self.embedding_dim,
            conv_filters=self.conv_filters,
            kernel_size=self.kernel_size,
            pool_size=self.pool_size,
            gru_units=self.gru_units,
            attention_width=self.attention_width,
            dropout=self.dropout,
        )

    def train_config(self) -> TrainConfig:
        # short runs clamp patience so epoch overrides always stay valid
        patience = min(self.patience, max(1, self.epochs - 1))
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            patience=patience,
            learning_rate=self.learning_rate,
            ratios=self.ratios,
            seed=self.seed,
        )

    def to_mapping(self) -> dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# two epoch budgets are in circulation for this model: the full 40-epoch
# training protocol and the shortened 10-epoch tuning budget
PRESETS: dict[str, dict[str, object]] = {
    "paper-iii": {"epochs": 40},
    "paper-iv": {"epochs": 10},
}


def apply_preset(cfg: RunConfig, name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(cfg, **PRESETS[name])


def _format_value(value: object) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    return str(value)


def _parse_value(name: str, raw: str, kind: type) -> object:
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        # the only tuple field is ratios
        parts = tuple(float(p) for p in raw.split(","))
        if len(parts) != 3:
            raise ValueError("expected three comma-separated ratios")
        return parts
    except ValueError as exc:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r}: {exc}") from exc


def parse_ratios(raw: str) -> tuple[float, float, float]:
    return _parse_value("ratios", raw, tuple)  # type: ignore[return-value]


_FIELD_TYPES = {
    "data": str,
    "out": str,
    "seed": int,
    "ratios": tuple,
    "vocab_size": int,
    "max_len": int,
    "embedding_dim": int,
    "conv_filters": int,
    "kernel_size": int,
    "pool_size": int,
    "gru_units": int,
    "attention_width": int,
    "dropout": float,
    "learning_rate": float,
    "epochs": int,
    "batch_size": int,
    "patience": int,
}


def read_config(path: str | Path) -> RunConfig:
    """Parse `key = value` lines; '#' starts a comment; unknown keys are errors."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, object] = {}
    for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw.strip(), _FIELD_TYPES[key])
    return RunConfig(**values)


def write_config(cfg: RunConfig, path: str | Path) -> None:
    lines = [f"{name} = {_format_value(value)}" for name, value in cfg.to_mapping().items()]
    Path(path).write_text("\n".join(lines) + "\n")
