"""Train/val/test partitions and the on-disk dataset manifest."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..numkit import ConfigurationError
from .formats import read_features, read_labels, write_features, write_labels
from .generator import ScenarioConfig, generate_dataset

RATIOS = (0.7, 0.1, 0.2)
SPLITS = ("train", "val", "test")


def _counts(n):
    n_val = round(RATIOS[1] * n)
    n_test = round(RATIOS[2] * n)
    return n - n_val - n_test, n_val, n_test


def build_splits(n_samples, cfg, mode="random", seed=None):
    """Assign sample indices to train/val/test.

    ``random`` shuffles samples at 70/10/20. ``cross_family`` keeps every
    scenario family (sample ``i`` belongs to family ``i % cfg.families``)
    inside a single split, allocating whole families at the same ratios.
    Returns ``{"train": [...], "val": [...], "test": [...]}``.
    """
    if n_samples < 10:
        raise ConfigurationError(f"need at least 10 samples, got {n_samples}")
    rng = np.random.default_rng([cfg.seed if seed is None else seed, 0x5911])
    if mode == "random":
        order = rng.permutation(n_samples)
        n_train, n_val, _ = _counts(n_samples)
        parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    elif mode == "cross_family":
        families = min(cfg.families, n_samples)
        if families < 3:
            raise ConfigurationError(f"cross_family needs at least 3 families, got {families}")
        fam_order = rng.permutation(families)
        n_train, n_val, n_test = _counts(families)
        n_val, n_test = max(n_val, 1), max(n_test, 1)
        n_train = families - n_val - n_test
        groups = (fam_order[:n_train], fam_order[n_train:n_train + n_val], fam_order[n_train + n_val:])
        fam_of = np.arange(n_samples) % cfg.families
        parts = tuple(np.flatnonzero(np.isin(fam_of, g)) for g in groups)
    else:
        raise ConfigurationError(f"unknown split mode {mode!r}")
    return {name: sorted(int(i) for i in part) for name, part in zip(SPLITS, parts)}


def sample_id(i):
    return f"s{i:05d}"


def write_dataset(out_dir, cfg, n_samples, mode="random"):
    """Generate ``n_samples`` scenarios and write them plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = build_splits(n_samples, cfg, mode)
    split_of = {i: name for name, idx in splits.items() for i in idx}
    records = []
    for i, s in enumerate(generate_dataset(cfg, n_samples)):
        sid = sample_id(i)
        rec = {
            "id": sid,
            "features_holistic": f"{sid}_holistic.sdf",
            "features_partial": f"{sid}_partial.sdf",
            "labels": f"{sid}_labels.sdl",
            "family": int(s.family),
            "reference": int(s.reference),
            "split": split_of[i],
        }
        write_features(out / rec["features_holistic"], s.holistic)
        write_features(out / rec["features_partial"], s.partial)
        write_labels(out / rec["labels"], s.labels)
        records.append(rec)
    manifest = {"scenario": cfg.to_dict(), "split_mode": mode, "samples": records}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path):
    path = Path(path)
    manifest = json.loads(path.read_text())
    manifest["root"] = str(path.parent)
    return manifest


def load_split(manifest, split):
    """Read every sample of ``split`` as ``(id, holistic, partial, labels)`` tuples."""
    root = Path(manifest["root"])
    out = []
    for rec in manifest["samples"]:
        if rec["split"] != split:
            continue
        out.append((rec["id"],
                    read_features(root / rec["features_holistic"]),
                    read_features(root / rec["features_partial"]),
                    read_labels(root / rec["labels"])))
    return out


def scenario_from_manifest(manifest):
    return ScenarioConfig.from_dict(manifest.get("scenario", {}))
