"""Hyperparameters and model configuration with flat ``key=value`` files."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from .fusion import MODALITIES

# full-size settings for large corpora
FULL_SCALE = dict(embed_dim=300, hidden_dim=512, common_dim=512, rounds=5, margin=0.05,
                  batch_size=32, learning_rate=1e-4, dropout=0.1, epochs=100)


class ConfigError(ValueError):
    pass


@dataclass
class Hyperparams:
    margin: float = 0.05
    batch_size: int = 32
    learning_rate: float = 1e-4
    dropout: float = 0.1
    epochs: int = 100
    seed: int = 42
    embed_dim: int = 32
    hidden_dim: int = 64
    common_dim: int = 64
    rounds: int = 5
    clip_norm: float = 5.0
    precision: str = "float32"

    def validate(self):
        if not self.margin > 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.common_dim != self.hidden_dim:
            raise ConfigError("common_dim must equal hidden_dim (the description encoder's size)")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        return self


@dataclass
class ModelConfig:
    hyper: Hyperparams = field(default_factory=Hyperparams)
    modalities: tuple = MODALITIES
    attention: bool = True
    code_vocab_size: int = 20000
    desc_vocab_size: int = 10000
    ast_vocab_size: int = 50000

    def validate(self):
        unknown = set(self.modalities) - set(MODALITIES)
        if unknown:
            raise ConfigError(f"unknown modalities: {', '.join(sorted(unknown))}")
        self.modalities = tuple(m for m in MODALITIES if m in self.modalities)
        if not self.modalities:
            raise ConfigError("at least one modality must be enabled")
        self.hyper.validate()
        return self

    def to_dict(self):
        out = dataclasses.asdict(self.hyper)
        out.update(
            modalities=",".join(self.modalities),
            attention=self.attention,
            code_vocab_size=self.code_vocab_size,
            desc_vocab_size=self.desc_vocab_size,
            ast_vocab_size=self.ast_vocab_size,
        )
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        hyper_keys = {f.name: f for f in fields(Hyperparams)}
        own_keys = {f.name: f for f in fields(cls) if f.name != "hyper"}
        unknown = set(d) - set(hyper_keys) - set(own_keys)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        hyper = Hyperparams(**{k: _coerce(hyper_keys[k], v) for k, v in d.items() if k in hyper_keys})
        cfg = cls(hyper=hyper)
        for k, v in d.items():
            if k in own_keys:
                setattr(cfg, k, _coerce(own_keys[k], v))
        return cfg.validate()

    def dumps(self):
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.to_dict().items())

    @classmethod
    def loads(cls, text, overrides=None):
        d = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected key=value")
            k, v = line.split("=", 1)
            d[k.strip()] = v.strip()
        d.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(d)

    @classmethod
    def load(cls, path, overrides=None):
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read(), overrides)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(f, v):
    if not isinstance(v, str):
        return tuple(v) if f.name == "modalities" else v
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    if f.name == "modalities":
        return tuple(m.strip() for m in v.split(",") if m.strip())
    if kind == "bool":
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{f.name}: not a boolean: {v!r}")
    try:
        if kind == "int":
            return int(v)
        if kind == "float":
            return float(v)
    except ValueError:
        raise ConfigError(f"{f.name}: cannot parse {v!r} as {kind}") from None
    return v
