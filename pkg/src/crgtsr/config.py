"""Run configuration: flat key=value files with '#' comments.

parse -> serialize -> parse is the identity; the architecture hash covers
only the fields that determine parameter shapes, so checkpoints stay valid
across changes to seeds or budgets.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass

__all__ = ["RunConfig", "ConfigError", "parse_config", "serialize_config", "load_config_file", "config_hash"]

ENV_SEED_VAR = "CRGTSR_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    # scene spec
    grid_rows: int = 10
    grid_cols: int = 10
    obstacle_density: float = 0.15
    object_count: int = 6
    scene_count: int = 8
    # architecture
    n_categories: int = 22
    seq_len: int = 4
    heads: int = 4
    layers: int = 2
    dict_width: int = 32        # adjacency dictionary columns
    appearance_width: int = 16
    feature_width: int = 64     # graph representation width
    global_width: int = 64      # region/fused width, also the visual feature width
    hidden_width: int = 128     # LSTM state width
    target_width: int = 16
    # reinforcement learning
    gamma: float = 0.99
    entropy_weight: float = 0.01
    value_coef: float = 0.5
    rollout_horizon: int = 20
    rl_lr: float = 1e-4
    workers: int = 2
    episode_budget: int = 20000
    max_episode_len: int = 50
    checkpoint_interval: int = 1000
    # imitation pre-training
    pretrain_lr: float = 1e-5
    pretrain_lr_decay: float = 0.95
    batch_size: int = 64

    @property
    def node_width(self) -> int:
        return 7 + self.appearance_width

    def validate(self) -> None:
        widths = {
            "dict_width": self.dict_width,
            "appearance_width": self.appearance_width,
            "feature_width": self.feature_width,
            "global_width": self.global_width,
            "hidden_width": self.hidden_width,
            "target_width": self.target_width,
        }
        for name, value in widths.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.seq_len < 1:
            raise ConfigError(f"seq_len must be >= 1, got {self.seq_len}")
        if self.heads < 1:
            raise ConfigError(f"heads must be >= 1, got {self.heads}")
        if self.feature_width % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide feature_width ({self.feature_width})")
        if self.global_width % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide global_width ({self.global_width})")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 <= self.obstacle_density < 0.4:
            raise ConfigError(f"obstacle_density must be in [0, 0.4), got {self.obstacle_density}")
        if self.object_count < 4:
            raise ConfigError(f"object_count must be >= 4, got {self.object_count}")
        if self.n_categories < 4:
            raise ConfigError(f"n_categories must be >= 4, got {self.n_categories}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.max_episode_len < 1:
            raise ConfigError(f"max_episode_len must be >= 1, got {self.max_episode_len}")
        if self.rollout_horizon < 1:
            raise ConfigError(f"rollout_horizon must be >= 1, got {self.rollout_horizon}")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}

# parameter shapes depend only on these
ARCH_FIELDS = (
    "n_categories", "seq_len", "heads", "layers", "dict_width",
    "appearance_width", "feature_width", "global_width", "hidden_width", "target_width",
)


def _coerce(field: dataclasses.Field, raw: str):
    if field.type == "int" or field.type is int:
        return int(raw)
    if field.type == "float" or field.type is float:
        return float(raw)
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw_line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown field {key!r}")
        try:
            values[key] = _coerce(_FIELDS[key], raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value {raw!r} for field {key!r}") from None
    cfg = RunConfig(**values)
    try:
        cfg.validate()
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}") from None
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    lines = [f"{f.name}={getattr(cfg, f.name)!r}".replace("'", "") for f in dataclasses.fields(RunConfig)]
    return "\n".join(lines) + "\n"


def load_config_file(path, environ=None) -> RunConfig:
    with open(path) as fh:
        cfg = parse_config(fh.read(), source=str(path))
    environ = os.environ if environ is None else environ
    if ENV_SEED_VAR in environ:
        try:
            cfg.seed = int(environ[ENV_SEED_VAR])
        except ValueError:
            raise ConfigError(f"{ENV_SEED_VAR} must be an integer, got {environ[ENV_SEED_VAR]!r}") from None
    return cfg


def config_hash(cfg: RunConfig) -> str:
    canonical = ",".join(f"{name}={getattr(cfg, name)}" for name in ARCH_FIELDS)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
