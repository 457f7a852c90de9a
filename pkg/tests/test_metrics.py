import functools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segdiff import metrics
from segdiff.numkit import ContractError


def random_labels(rng, L=40, C=3, switch=0.15):
    out = np.zeros((L, C), dtype=np.uint8)
    cur = rng.integers(0, 2, C)
    for t in range(L):
        if rng.random() < switch:
            cur = rng.integers(0, 2, C)
        out[t] = cur
    return out


def tokens(labels):
    """Label-set tokens of maximal runs, computed with itertools-free bookkeeping."""
    sets = [frozenset(np.flatnonzero(r).tolist()) for r in labels]
    runs = []
    for t, s in enumerate(sets):
        if t == 0 or s != sets[t - 1]:
            runs.append([s, t, t + 1])
        else:
            runs[-1][2] = t + 1
    return runs


def lev_oracle(a, b):
    @functools.lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def edit_oracle(pred, gt):
    a = tuple(r[0] for r in tokens(pred))
    b = tuple(r[0] for r in tokens(gt))
    return (1 - lev_oracle(a, b) / max(len(a), len(b))) * 100


def f1_oracle(pred, gt, tau):
    P = [r for r in tokens(pred) if r[0]]
    G = [r for r in tokens(gt) if r[0]]
    taken = set()
    tp = 0
    for s, a, b in P:
        scores = []
        for j, (gs, c, d) in enumerate(G):
            if j in taken or gs != s:
                continue
            inter = max(0, min(b, d) - max(a, c))
            scores.append((inter / (max(b, d) - min(a, c)), -j))
        if scores:
            iou, neg_j = max(scores)
            if iou >= tau:
                tp += 1
                taken.add(-neg_j)
    fp, fn = len(P) - tp, len(G) - tp
    return 100.0 if tp + fp + fn == 0 else 200.0 * tp / (2 * tp + fp + fn)


def test_edit_and_f1_agree_with_oracles():
    rng = np.random.default_rng(0)
    for _ in range(300):
        p, g = random_labels(rng), random_labels(rng)
        ps, gs = metrics.to_segments(p), metrics.to_segments(g)
        assert metrics.edit_score(ps, gs) == pytest.approx(edit_oracle(p, g), abs=1e-12)
        for tau in metrics.THRESHOLDS:
            assert metrics.f1_at(ps, gs, tau) == pytest.approx(f1_oracle(p, g, tau), abs=1e-12)


def test_levenshtein_known_values():
    assert metrics.levenshtein("kitten", "sitting") == 3
    assert metrics.levenshtein("", "abc") == 3
    assert metrics.levenshtein("abc", "abc") == 0


def test_identity_scores_100():
    g = random_labels(np.random.default_rng(1))
    rep = metrics.evaluate([g], [g])
    assert all(v == 100.0 for v in rep.headline().values())


def test_all_background_scores_100():
    z = np.zeros((10, 2), dtype=np.uint8)
    assert metrics.score_sample(z, z)["F1@50"] == 100.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_f1_non_increasing_and_bounded(seed):
    rng = np.random.default_rng(seed)
    p, g = random_labels(rng), random_labels(rng)
    row = metrics.score_sample(p, g)
    assert row["F1@10"] >= row["F1@25"] >= row["F1@50"]
    assert all(0 <= row[k] <= 100 for k in metrics.HEADLINE)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 4))
def test_upsampling_invariance(seed, k):
    rng = np.random.default_rng(seed)
    p, g = random_labels(rng, L=20), random_labels(rng, L=20)
    a = metrics.score_sample(p, g)
    b = metrics.score_sample(np.repeat(p, k, axis=0), np.repeat(g, k, axis=0))
    for key in metrics.HEADLINE:
        assert a[key] == pytest.approx(b[key], abs=1e-9)


def test_segments_and_rasterize_round_trip():
    g = random_labels(np.random.default_rng(2), C=4)
    segs = metrics.to_segments(g)
    assert all(a.labels != b.labels for a, b in zip(segs, segs[1:]))
    np.testing.assert_array_equal(metrics.rasterize(segs, 4), g)


def test_multilabel_frames_need_exact_set_match():
    g = np.array([[1, 1], [1, 1]])
    p = np.array([[1, 0], [1, 1]])
    assert metrics.frame_accuracy(p, g) == 50.0


def test_background_excluded_from_f1():
    g = np.array([[0], [0], [1], [1]])
    p = np.array([[1], [1], [0], [0]])
    tp, fp, fn = metrics.f1_counts(metrics.to_segments(p), metrics.to_segments(g), 0.1)
    assert (tp, fp, fn) == (0, 1, 1)


def test_pooled_accuracy_and_per_sample_means():
    rng = np.random.default_rng(3)
    preds = [random_labels(rng, L=L) for L in (10, 30)]
    gts = [random_labels(rng, L=L) for L in (10, 30)]
    rep = metrics.evaluate(preds, gts, ["a", "b"])
    correct = sum(r["correct_frames"] for r in rep.per_sample)
    assert rep.ACC == pytest.approx(100 * correct / 40)
    assert rep.EDIT == pytest.approx(np.mean([r["EDIT"] for r in rep.per_sample]))
    assert [r["id"] for r in rep.per_sample] == ["a", "b"]


def test_report_json_round_trip():
    rng = np.random.default_rng(4)
    rep = metrics.evaluate([random_labels(rng)], [random_labels(rng)])
    back = metrics.MetricReport.from_json(rep.to_json())
    assert back == rep
    assert set(json.loads(rep.to_json())) == set(metrics.HEADLINE) | {"per_sample"}


def test_contract_errors():
    with pytest.raises(ContractError):
        metrics.evaluate([], [])
    with pytest.raises(ContractError):
        metrics.frame_accuracy(np.zeros((3, 2)), np.zeros((4, 2)))
