"""Experiment configuration: nested dataclasses read from / written to YAML."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .ddpg import DdpgHyper
from .env import EnvConstants

SCENARIOS = ("co_optimisation", "design_only", "fixed_design")
CONTROLLERS = ("ddpg", "rule_based")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    csv_path: str | None = None  # None -> synthetic year
    synthetic_seed: int = 0
    split_seed: int = 0


@dataclass(frozen=True)
class DesignHyper:
    lr: float = 5e-3
    entropy_weight: float = 0.1
    n_components: int = 3
    sigma_init: float = 1.0
    summary_samples: int = 1000
    standardize_returns: bool = True


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 32
    long_term_every: int = 1
    long_term_horizon: int | None = None  # None -> whole training split (8088 h)
    validation_horizon: int | None = None  # None -> whole validation split (672 h)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "co_optimisation"
    fixed_design: tuple[float, float] | None = None  # (pv_kwp, battery_kwh)
    fixed_controller: str = "rule_based"
    iterations: int = 500
    designs_per_iteration: int = 8
    episodes_per_iteration: int = 32
    episode_length: int = 168
    seeds: tuple[int, ...] = tuple(range(30))
    env: EnvConstants = field(default_factory=EnvConstants)
    ddpg: DdpgHyper = field(default_factory=DdpgHyper)
    design: DesignHyper = field(default_factory=DesignHyper)
    eval: EvalConfig = field(default_factory=EvalConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.fixed_controller not in CONTROLLERS:
            raise ConfigError(f"fixed_controller must be one of {CONTROLLERS}")
        if self.iterations < 1 or self.designs_per_iteration < 1 or self.episode_length < 1:
            raise ConfigError("iterations, designs_per_iteration and episode_length must be >= 1")
        if self.episodes_per_iteration < self.designs_per_iteration:
            raise ConfigError("need at least one episode per sampled design")
        if self.scenario == "fixed_design":
            if self.fixed_design is None or len(self.fixed_design) != 2 or min(self.fixed_design) <= 0:
                raise ConfigError("fixed_design scenario needs a positive (pv_kwp, battery_kwh)")
        if self.env.horizon != self.episode_length:
            object.__setattr__(self, "env", dataclasses.replace(self.env, horizon=self.episode_length))

    @property
    def controller(self) -> str:
        if self.scenario == "co_optimisation":
            return "ddpg"
        if self.scenario == "design_only":
            return "rule_based"
        return self.fixed_controller

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return _to_plain(dataclasses.asdict(self))

    def fingerprint(self) -> str:
        d = self.to_dict()
        d.pop("seeds")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        nested = _NESTED.get((cls, name))
        if nested is not None:
            kwargs[name] = _build(nested, value or {}, f"{where}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {
    (ExperimentConfig, "env"): EnvConstants,
    (ExperimentConfig, "ddpg"): DdpgHyper,
    (ExperimentConfig, "design"): DesignHyper,
    (ExperimentConfig, "eval"): EvalConfig,
    (ExperimentConfig, "data"): DataConfig,
}


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data or {}, "config")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))


def dump_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
    return path
