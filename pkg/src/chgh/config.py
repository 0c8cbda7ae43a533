"""Flat ``key = value`` config files mapped onto dataclasses.

Lines starting with ``#`` are comments.  Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError, ParseError

VARIANTS = ("static", "adaptive", "cge", "hge", "full")


@dataclass
class ModelConfig:
    d: int = 32
    c: int = 0  # 0 = automatic: 100, or 8 when there are fewer than 100 skills
    heads: int = 4
    recurrent_layers: int = 3
    min_seq_len: int = 5
    window: int = 0  # history length fed to the model; 0 = all steps before the target
    learning_rate: float = 1e-3
    hyper_lr_mult: float = 1.0
    dropout: float = 0.3
    scheduler_step: int = 50
    scheduler_factor: float = 0.1
    lambda1: float = 1e-5
    lambda2: float = 1e-5
    delta: float = 1e-3
    epsilon: float = 0.1
    n_classes: int = 5
    epochs: int = 200
    patience: int = 30
    seed: int = 0
    variant: str = "full"
    split: str = "temporal"
    shared_embedding: bool = True
    float64: bool = False
    cluster_pooling: str = "mean"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.cluster_pooling not in ("sum", "mean"):
            raise ConfigError(f"cluster_pooling must be 'sum' or 'mean', got {self.cluster_pooling!r}")
        if self.split not in ("temporal", "skill"):
            raise ConfigError(f"split must be 'temporal' or 'skill', got {self.split!r}")
        for name in ("d", "heads", "recurrent_layers", "min_seq_len", "n_classes", "scheduler_step"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.learning_rate < 0 or self.hyper_lr_mult < 0:
            raise ConfigError("learning rates must be nonnegative")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} is not divisible by heads={self.heads}")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        if not 0 <= self.epsilon < 1:
            raise ConfigError("epsilon must lie in [0, 1)")
        if self.c < 0 or self.window < 0 or self.epochs < 0:
            raise ConfigError("c, window and epochs must be >= 0")
        if self.window and self.window < self.min_seq_len:
            raise ConfigError(f"window={self.window} is shorter than min_seq_len={self.min_seq_len}")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")

    def clusters_for(self, n_skills: int) -> int:
        if self.c:
            return self.c
        return 100 if n_skills >= 100 else 8

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _convert(raw: str, kind, key: str):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_kv(text: str, cls, source: str = "<config>"):
    """Build ``cls`` from flat ``key = value`` text."""
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", line=lineno, path=source)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _convert(raw, hints[key], key)
    return cls(**values)


def load_kv(path, cls):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_kv(path.read_text(), cls, str(path))


def dump_kv(obj) -> str:
    return "".join(f"{f.name} = {getattr(obj, f.name)}\n" for f in fields(obj))
