"""Flat key=value run configuration.

One ``key = value`` pair per line; ``#`` starts a comment.  Unknown keys are
rejected.  Command-line overrides are applied after the file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigError
from .fusion import FusionConfig
from .model import ModelConfig
from .world.metrics import Limits
from .world.world import WorldConfig


@dataclass
class RunConfig:
    # run identity and seeds
    seed: int = 0                  # init + shuffle seed for training
    seed_start: int = 0            # first episode seed (inclusive)
    seed_end: int = 8              # last episode seed (exclusive)
    world: str = "default"         # "default" or "clean" (no obstacles, vehicles, pedestrians)
    steer_noise: float = 0.02      # expert steering perturbation during data collection
    # model
    c: int = 64
    heads: int = 4
    layers: int = 2
    T: int = 4
    # optimiser
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    steps: int = 1000
    log_every: int = 10
    # evaluation
    policy: str = "model"          # "model", "expert" or "stop"
    time_limit: float = 120.0
    # gradient check
    gradcheck_precision: str = "float64"
    gradcheck_eps: float = 1e-5
    # paths
    data_dir: str = "data"
    out_dir: str = "runs"
    checkpoint: str = "runs/final.sfse"

    def model_config(self) -> ModelConfig:
        return ModelConfig(fusion=FusionConfig(heads=self.heads, layers_per_resolution=self.layers, c=self.c), T=self.T)

    def world_config(self) -> WorldConfig:
        if self.world == "clean":
            return WorldConfig.clean()
        if self.world == "default":
            return WorldConfig()
        raise ConfigError(f"unknown world preset {self.world!r}")

    def limits(self) -> Limits:
        return Limits(time_limit=self.time_limit)

    def seeds(self) -> range:
        return range(self.seed_start, self.seed_end)

    def set(self, key: str, value: str) -> None:
        """Assign one key from its string form."""
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        kind = types[key]
        try:
            if kind in ("int", int):
                parsed = int(value)
            elif kind in ("float", float):
                parsed = float(value)
            else:
                parsed = value.strip()
        except ValueError:
            raise ConfigError(f"bad value {value!r} for {key}") from None
        setattr(self, key, parsed)

    def update(self, pairs: dict[str, str]) -> "RunConfig":
        for k, v in pairs.items():
            self.set(k, v)
        return self

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in dataclasses.asdict(self).items())


def parse_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def load_config(path: str | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        try:
            with open(path) as fh:
                cfg.update(parse_pairs(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    if overrides:
        cfg.update(overrides)
    return cfg
