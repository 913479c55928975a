"""Training/model hyperparameters and their flat key/value file form."""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields

FUSION_MODES = ("gated", "add", "concat", "multiply", "short_only")


@dataclass
class TrainingConfig:
    d: int = 64
    heads: int = 4
    lstm_layers: int = 2
    dropout: float = 0.2
    lr: float = 0.001
    clip_norm: float = 5.0
    batch_size: int = 256
    negatives: int = 20
    n_targets: int = 1
    epochs: int = 10
    seed: int = 0
    fusion: str = "gated"
    user_attention: bool = True
    long_term: bool = True
    side_info: bool = True
    train_last_only: bool = False
    scaled_attention: bool = False
    attention_residual_norm: bool = True
    tie_embeddings: bool = False
    logit_correction: bool = True

    def __post_init__(self):
        if self.d < 1 or self.heads < 1 or self.lstm_layers < 1:
            raise ValueError("d, heads and lstm_layers must be positive")
        if self.d % self.heads:
            raise ValueError(f"heads ({self.heads}) must divide d ({self.d})")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.fusion!r}; expected one of {FUSION_MODES}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        for name in ("lr", "clip_norm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("batch_size", "negatives", "n_targets", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.tie_embeddings and self.side_info:
            raise ValueError("tie_embeddings needs side_info=false (the id table must be d wide)")

    @property
    def effective_fusion(self) -> str:
        return self.fusion if self.long_term else "short_only"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainingConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for k, v in values.items():
            kwargs[k] = _coerce(known[k].type, v)
        return cls(**kwargs)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _coerce(type_name, value):
    t = type_name if isinstance(type_name, str) else type_name.__name__
    if t == "bool":
        if isinstance(value, bool):
            return value
        s = str(value).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if t == "int":
        return int(value)
    if t == "float":
        return float(value)
    return str(value).strip().strip('"')


def load_config(path) -> TrainingConfig:
    """Read ``key = value`` lines (a section header is optional)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError:
        parser.read_string("[training]\n" + text)
    values = {}
    for section in parser.sections():
        values.update(parser[section])
    cfg = TrainingConfig.from_dict(values)
    return apply_env(cfg)


def apply_env(cfg: TrainingConfig) -> TrainingConfig:
    seed = os.environ.get("SEQMATCH_SEED")
    if seed:
        cfg.seed = int(seed)
    return cfg


def dump_config(cfg: TrainingConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in cfg.to_dict().items():
            fh.write(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n")
