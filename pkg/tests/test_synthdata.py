import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segdiff import metrics
from segdiff.numkit import ConfigurationError
from segdiff.synthdata import (FormatError, ScenarioConfig, build_splits, decode_features,
                               decode_labels, encode_features, encode_labels, generate_dataset,
                               generate_sample, load_manifest, load_split, markov_track,
                               nearest_prototype_decode, prototypes, read_features, read_labels,
                               write_dataset, write_features, write_labels)


def test_same_seed_bit_identical():
    cfg = ScenarioConfig(frames=40)
    a, b = generate_sample(cfg, 5), generate_sample(cfg, 5)
    for f in ("holistic", "partial", "labels", "tracks"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert not np.array_equal(a.holistic, generate_sample(cfg, 6).holistic)


def test_single_person_noise_free_oracle_is_exact():
    cfg = ScenarioConfig(persons=1, classes=4, frames=64, snr=float("inf"), feature_dim=16)
    for seed in range(5):
        s = generate_sample(cfg, seed, min_persons=1)
        feats = s.partial[:, :cfg.feature_dim]
        np.testing.assert_array_equal(feats, s.labels @ prototypes(cfg))
        decoded = nearest_prototype_decode(feats, prototypes(cfg))
        assert metrics.frame_accuracy(decoded, s.labels) == 100.0


def test_sticky_limit_gives_one_segment():
    cfg = ScenarioConfig(p_stay=1 - 1e-12, frames=50)
    s = generate_sample(cfg, 3)
    for track in s.tracks:
        assert len(metrics.to_segments(track)) == 1


def test_mean_segment_length():
    cfg = ScenarioConfig(p_stay=0.95, frames=1000, classes=4)
    rng = np.random.default_rng(0)
    lengths = []
    for _ in range(1000):
        segs = metrics.to_segments(markov_track(rng, cfg))
        lengths += [s.end - s.start for s in segs[:-1]]  # the last run is cut off by the window
    assert abs(np.mean(lengths) - 20.0) <= 0.15 * 20.0


def test_partial_stream_is_more_informative():
    cfg = ScenarioConfig(persons=3, classes=4, frames=128, snr=10.0)
    protos = prototypes(cfg)
    accs = {"partial": [], "holistic": []}
    for s in generate_dataset(cfg, 30):
        for stream in accs:
            feats = getattr(s, stream)[:, :cfg.feature_dim]
            accs[stream].append(metrics.frame_accuracy(nearest_prototype_decode(feats, protos), s.labels))
    assert np.mean(accs["partial"]) >= np.mean(accs["holistic"]) + 20


def test_labels_follow_only_the_reference():
    s = generate_sample(ScenarioConfig(), 11)
    np.testing.assert_array_equal(s.labels, s.tracks[s.reference])
    assert np.all(s.partial[:, -3:].argmax(1) == s.reference)


def test_config_guards():
    with pytest.raises(ConfigurationError):
        generate_sample(ScenarioConfig(persons=1), 0)
    with pytest.raises(ConfigurationError):
        generate_sample(ScenarioConfig(p_stay=1.0), 0)
    with pytest.raises(ConfigurationError):
        generate_sample(ScenarioConfig(snr=0.0), 0)


def test_random_split_ratios_and_reproducibility():
    cfg = ScenarioConfig()
    sp = build_splits(790, cfg)
    assert {k: len(v) for k, v in sp.items()} == {"train": 553, "val": 79, "test": 158}
    assert sp == build_splits(790, cfg)
    assert sorted(sp["train"] + sp["val"] + sp["test"]) == list(range(790))


def test_cross_family_disjoint():
    cfg = ScenarioConfig(families=10)
    sp = build_splits(100, cfg, "cross_family")
    fams = {k: {i % 10 for i in v} for k, v in sp.items()}
    assert not (fams["train"] & fams["val"]) and not (fams["train"] & fams["test"])
    assert not (fams["val"] & fams["test"])
    with pytest.raises(ConfigurationError):
        build_splits(100, ScenarioConfig(families=2), "cross_family")
    with pytest.raises(ConfigurationError):
        build_splits(9, cfg)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 20), st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_feature_round_trip(L, D, seed):
    x = np.random.default_rng(seed).normal(size=(L, D)).astype(np.float32).astype(np.float64)
    buf = encode_features(x)
    assert len(buf) == 12 + 4 * L * D
    assert np.array_equal(decode_features(buf), x)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 20), st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_label_round_trip(L, C, seed):
    y = np.random.default_rng(seed).integers(0, 2, (L, C)).astype(np.uint8)
    buf = encode_labels(y)
    assert len(buf) == 12 + L * C
    assert np.array_equal(decode_labels(buf), y)


def test_header_layout():
    buf = encode_features(np.zeros((5, 3)))
    assert buf[:4] == b"SDF1"
    assert struct.unpack("<II", buf[4:12]) == (5, 3)
    assert len(buf) - 12 == 5 * 3 * 4


def test_empty_and_all_zero_files(tmp_path):
    write_features(tmp_path / "e.sdf", np.zeros((0, 4)))
    assert read_features(tmp_path / "e.sdf").shape == (0, 4)
    write_labels(tmp_path / "z.sdl", np.zeros((7, 2), dtype=np.uint8))
    assert read_labels(tmp_path / "z.sdl").sum() == 0


def test_corruption_yields_format_errors():
    good = encode_labels(np.ones((3, 2), dtype=np.uint8))
    with pytest.raises(FormatError) as e:
        decode_labels(b"XXXX" + good[4:])
    assert e.value.offset == 0
    with pytest.raises(FormatError):
        decode_labels(good[:-1])
    with pytest.raises(FormatError):
        decode_labels(good + b"\x00")
    bad = bytearray(good)
    bad[14] = 7
    with pytest.raises(FormatError) as e:
        decode_labels(bytes(bad))
    assert e.value.offset == 14
    with pytest.raises(FormatError):
        decode_features(encode_labels(np.ones((1, 1), dtype=np.uint8)))
    with pytest.raises(FormatError):
        decode_features(b"SD")


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=40))
def test_arbitrary_bytes_never_crash(buf):
    for dec in (decode_features, decode_labels):
        try:
            dec(buf)
        except FormatError:
            pass


def test_dataset_on_disk(tmp_path):
    cfg = ScenarioConfig(frames=20, families=4, seed=7)
    path = write_dataset(tmp_path / "a", cfg, 12)
    write_dataset(tmp_path / "b", cfg, 12)
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    m = load_manifest(path)
    rec = m["samples"][0]
    assert set(rec) == {"id", "features_holistic", "features_partial", "labels", "family", "reference", "split"}
    train = load_split(m, "train")
    assert len(train) + len(load_split(m, "val")) + len(load_split(m, "test")) == 12
    sid, h, p, y = train[0]
    assert h.shape == (20, cfg.stream_width) and y.shape == (20, cfg.classes)
    json.loads(path.read_text())
