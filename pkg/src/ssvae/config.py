"""Experiment configuration: one TOML file with a section per component."""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baselines.vae import VAEConfig
from .metrics import config_hash
from .model import SSVAEConfig
from .synth import SynthConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass
class BaselineConfig:
    latent_dim: int = 12
    encoder_hidden: tuple = (128, 128)
    decoder_hidden: tuple = (64, 64)
    rnn_hidden: int = 64
    kl_weight: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 50
    ukf_state_dim: int = 8
    ukf_alpha: float = 0.1
    ukf_beta: float = 2.0
    ukf_kappa: float = 0.0

    def vae_config(self, seed: int) -> VAEConfig:
        return VAEConfig(self.latent_dim, tuple(self.encoder_hidden), tuple(self.decoder_hidden),
                         self.rnn_hidden, self.kl_weight, self.learning_rate, self.epochs, seed)


@dataclass
class MetricsConfig:
    lowpass_window: int = 49
    separation_window: int = 49
    tolerance_frames: int = 24


def _without_seed(cls):
    return [f for f in fields(cls) if f.name != "seed"]


@dataclass
class TrainConfig:
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    ssvae: SSVAEConfig = field(default_factory=SSVAEConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    SECTIONS = {"synth": SynthConfig, "ssvae": SSVAEConfig, "baselines": BaselineConfig,
                "metrics": MetricsConfig}

    def synth_config(self) -> SynthConfig:
        return replace(self.synth, seed=self.seed)

    def ssvae_config(self) -> SSVAEConfig:
        return replace(self.ssvae, seed=self.seed)

    def to_dict(self) -> dict:
        out = {"seed": self.seed}
        for name, cls in self.SECTIONS.items():
            section = asdict(getattr(self, name))
            section.pop("seed", None)
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def with_seed(self, seed: int | None) -> "TrainConfig":
        return self if seed is None else replace(self, seed=int(seed))

    def validate(self) -> "TrainConfig":
        try:
            self.synth_config().validate()
            self.ssvae_config().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("lowpass_window", "separation_window"):
            w = getattr(self.metrics, name)
            if w < 1 or w % 2 == 0:
                raise ConfigError(f"metrics.{name} must be a positive odd integer, got {w}")
        return self


def _coerce(section: str, key: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, tuple):
        ok = isinstance(value, list) and all(isinstance(v, int) for v in value)
        value = tuple(value) if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{section}.{key}: expected {type(default).__name__}, got {value!r}")
    return value


def config_from_dict(data: dict) -> TrainConfig:
    cfg = TrainConfig()
    for key, value in data.items():
        if key == "seed":
            cfg.seed = _coerce("run", "seed", value, 0)
            continue
        if key not in TrainConfig.SECTIONS:
            raise ConfigError(f"unknown config key {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"config key {key!r} must be a section")
        cls = TrainConfig.SECTIONS[key]
        allowed = {f.name: f for f in _without_seed(cls)}
        current = getattr(cfg, key)
        updates = {}
        for sub, v in value.items():
            if sub not in allowed:
                raise ConfigError(f"unknown config key '{key}.{sub}'")
            updates[sub] = _coerce(key, sub, v, getattr(current, sub))
        setattr(cfg, key, replace(current, **updates))
    return cfg


def load_config(path=None, seed: int | None = None) -> TrainConfig:
    if path is None:
        cfg = TrainConfig()
    else:
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = config_from_dict(data)
    return cfg.with_seed(seed).validate()


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: TrainConfig) -> str:
    data = cfg.to_dict()
    lines = [f"seed = {data.pop('seed')}"]
    for section, values in data.items():
        lines.append("")
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_toml_value(v)}" for k, v in values.items())
    return "\n".join(lines) + "\n"
