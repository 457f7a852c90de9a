"""Flat, JSON-serializable run configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .numkit import ConfigurationError

ABLATION_FLAGS = ("no_partial", "no_hpxlstm", "no_bca", "no_dft_cond")
VARIANTS = ("full",) + ABLATION_FLAGS + ("none",)


@dataclass
class RunConfig:
    # model
    d_model: int = 16
    enc_layers: int = 4
    enc_maps: int = 32
    enc_dropout: float = 0.5
    kernel_size: int = 5
    dec_layers: int = 3
    dec_maps: int = 24
    dec_dropout: float = 0.1
    time_dim: int = 64
    forget_gate: str = "sigmoid"
    forget_bias: float = 3.0
    dft_norm: str = "ortho"
    # diffusion
    timesteps: int = 1000
    schedule: str = "cosine"
    sampling_steps: int = 25
    eta: float = 0.0
    label_scale: float = 1.0
    symmetric_labels: bool = True
    # optimization
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4
    epochs: int = 200
    checkpoint_every: int = 0
    # ablations
    no_partial: bool = False
    no_hpxlstm: bool = False
    no_bca: bool = False
    no_dft_cond: bool = False
    # evaluation
    threshold: float = 0.5
    workers: int = 1
    # data / run
    manifest: str = ""
    split_mode: str = "random"
    seed: int = 0
    out_dir: str = "runs/default"

    def validate(self):
        if self.kernel_size % 2 == 0:
            raise ConfigurationError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.forget_gate not in ("sigmoid", "exp"):
            raise ConfigurationError(f"forget_gate must be sigmoid or exp, got {self.forget_gate!r}")
        if self.schedule not in ("cosine", "linear"):
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")
        if self.dft_norm not in ("ortho", "none"):
            raise ConfigurationError(f"dft_norm must be ortho or none, got {self.dft_norm!r}")
        if self.split_mode not in ("random", "cross_family"):
            raise ConfigurationError(f"unknown split_mode {self.split_mode!r}")
        if self.timesteps < 1 or not 1 <= self.sampling_steps <= self.timesteps:
            raise ConfigurationError("need 1 <= sampling_steps <= timesteps")
        if self.batch_size < 1 or self.epochs < 0 or self.lr <= 0:
            raise ConfigurationError("batch_size, epochs and lr must be positive")
        for name in ("d_model", "enc_layers", "enc_maps", "dec_layers", "dec_maps", "time_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        return self

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()

    @classmethod
    def load(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: invalid JSON ({e})") from None

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    def with_variant(self, variant):
        """Copy with the ablation flags of ``variant`` set (``none`` sets all)."""
        if variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
        flags = {f: False for f in ABLATION_FLAGS}
        if variant == "none":
            flags = {f: True for f in ABLATION_FLAGS}
        elif variant != "full":
            flags[variant] = True
        return replace(self, **flags)

    @property
    def active_flags(self):
        return [f for f in ABLATION_FLAGS if getattr(self, f)]


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {f.name: {"type": {int: "integer", float: "number", str: "string",
                                     bool: "boolean"}[type(f.default)]}
                   for f in fields(RunConfig)},
}
