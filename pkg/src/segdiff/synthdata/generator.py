"""Synthetic multi-person referring scenarios.

Every person runs a sticky Markov chain over label sets. Each active class adds
a fixed prototype vector to that person's appearance. The partial stream sees
only the referred person; the holistic stream sees a weighted mix of everyone,
so with equal weights it cannot tell whose actions are whose.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..numkit import ConfigurationError


@dataclass
class ScenarioConfig:
    persons: int = 3
    classes: int = 6
    frames: int = 128
    p_stay: float = 0.95
    cooccurrence: float = 0.2
    p_absent: float = 0.1
    feature_dim: int = 32
    snr: float = 10.0
    mixing_weights: list | None = None
    families: int = 8
    family_jitter: float = 0.1
    seed: int = 0

    def validate(self, min_persons=2):
        if self.persons < min_persons:
            raise ConfigurationError(f"need at least {min_persons} persons, got {self.persons}")
        if not 0.0 < self.p_stay < 1.0:
            raise ConfigurationError(f"p_stay must be in (0, 1), got {self.p_stay}")
        if not self.snr > 0:
            raise ConfigurationError(f"snr must be positive, got {self.snr}")
        if self.classes < 1 or self.frames < 0 or self.feature_dim < 1 or self.families < 1:
            raise ConfigurationError("classes, feature_dim and families must be positive")
        if self.mixing_weights is not None and len(self.mixing_weights) != self.persons:
            raise ConfigurationError("mixing_weights needs one weight per person")
        return self

    @property
    def weights(self):
        if self.mixing_weights is None:
            return np.ones(self.persons)
        return np.asarray(self.mixing_weights, dtype=np.float64)

    @property
    def stream_width(self):
        """Width of the written feature files: features plus the reference one-hot."""
        return self.feature_dim + self.persons

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class Sample:
    holistic: np.ndarray  # (L, D + P)
    partial: np.ndarray  # (L, D + P)
    labels: np.ndarray  # (L, C) uint8, referred person only
    reference: int
    family: int
    tracks: np.ndarray = field(repr=False, default=None)  # (P, L, C) all persons


def sample_seed(master_seed, index):
    """Independent per-sample seed derived from (master seed, index)."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def prototypes(cfg, family=0):
    base = np.random.default_rng([cfg.seed, 0x9E37]).standard_normal((cfg.classes, cfg.feature_dim))
    if cfg.family_jitter == 0:
        return base
    shift = np.random.default_rng([cfg.seed, 0x9E38, family]).standard_normal(base.shape)
    return base + cfg.family_jitter * shift


def _draw_labelset(rng, cfg, current):
    for _ in range(100):
        new = np.zeros(cfg.classes, dtype=np.uint8)
        if rng.random() >= cfg.p_absent:
            new[:] = rng.random(cfg.classes) < cfg.cooccurrence
            new[rng.integers(cfg.classes)] = 1
        if current is None or not np.array_equal(new, current):
            return new
    return new


def markov_track(rng, cfg):
    track = np.zeros((cfg.frames, cfg.classes), dtype=np.uint8)
    current = None
    for t in range(cfg.frames):
        if current is None or rng.random() >= cfg.p_stay:
            current = _draw_labelset(rng, cfg, current)
        track[t] = current
    return track


def generate_sample(cfg, seed, family=0, min_persons=2):
    """Draw one scenario; identical ``(cfg, seed, family)`` give identical samples."""
    cfg.validate(min_persons)
    rng = np.random.default_rng(seed)
    protos = prototypes(cfg, family)
    target = int(rng.integers(cfg.persons))
    tracks = np.stack([markov_track(rng, cfg) for _ in range(cfg.persons)])
    signals = tracks.astype(np.float64) @ protos  # (P, L, D)
    sigma = 0.0 if math.isinf(cfg.snr) else 1.0 / math.sqrt(cfg.snr)
    shape = (cfg.frames, cfg.feature_dim)
    partial = signals[target] + sigma * rng.standard_normal(shape)
    holistic = np.tensordot(cfg.weights, signals, axes=1) + sigma * rng.standard_normal(shape)
    ref = np.zeros((cfg.frames, cfg.persons))
    ref[:, target] = 1.0
    return Sample(
        holistic=np.concatenate([holistic, ref], axis=1),
        partial=np.concatenate([partial, ref], axis=1),
        labels=tracks[target].copy(),
        reference=target,
        family=family,
        tracks=tracks,
    )


def generate_dataset(cfg, n_samples):
    """Sample ``i`` uses seed ``sample_seed(cfg.seed, i)`` and family ``i % families``."""
    return [generate_sample(cfg, sample_seed(cfg.seed, i), family=i % cfg.families)
            for i in range(n_samples)]


def all_labelsets(num_classes):
    idx = np.arange(2 ** num_classes)
    return ((idx[:, None] >> np.arange(num_classes)) & 1).astype(np.uint8)


def nearest_prototype_decode(features, protos, weight=1.0):
    """Label each frame with the label set whose (weighted) prototype sum is nearest.

    ``features`` must exclude the reference one-hot columns.
    """
    sets = all_labelsets(protos.shape[0])
    centers = weight * (sets.astype(np.float64) @ protos)
    d2 = ((features[:, None, :] - centers[None]) ** 2).sum(axis=-1)
    return sets[np.argmin(d2, axis=1)]
