"""Frame accuracy, edit score and segmental F1 for multi-label frame sequences.

The unit of comparison is a frame's full label set: two frames agree only if
their sets of active classes are identical. Segments are maximal runs of an
identical label set; the empty set is the background segment.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .numkit import ContractError

THRESHOLDS = (0.10, 0.25, 0.50)
HEADLINE = ("ACC", "EDIT", "F1@10", "F1@25", "F1@50")


@dataclass(frozen=True)
class Segment:
    start: int  # inclusive
    end: int  # exclusive
    labels: tuple

    @property
    def background(self):
        return len(self.labels) == 0


def _labelsets(labels):
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ContractError(f"expected an L x C label matrix, got shape {labels.shape}")
    return [tuple(np.flatnonzero(row > 0.5).tolist()) for row in labels]


def to_segments(labels):
    """Maximal-run decomposition of a binary L x C matrix."""
    sets = _labelsets(labels)
    segs = []
    start = 0
    for i in range(1, len(sets) + 1):
        if i == len(sets) or sets[i] != sets[start]:
            segs.append(Segment(start, i, sets[start]))
            start = i
    return segs


def rasterize(segments, num_classes):
    L = segments[-1].end if segments else 0
    out = np.zeros((L, num_classes), dtype=np.uint8)
    for s in segments:
        out[s.start:s.end, list(s.labels)] = 1
    return out


def frame_accuracy(pred, gt):
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ContractError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if pred.shape[0] == 0:
        raise ContractError("empty sequence")
    match = np.all((pred > 0.5) == (gt > 0.5), axis=1)
    return 100.0 * float(match.mean())


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def edit_score(pred, gt):
    """Normalized Levenshtein similarity of the two label-set sequences, in [0, 100]."""
    p = [s.labels for s in pred]
    g = [s.labels for s in gt]
    n = max(len(p), len(g))
    if n == 0:
        return 100.0
    return max(0.0, (1.0 - levenshtein(p, g) / n) * 100.0)


def _iou(a, b):
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    return inter / (max(a.end, b.end) - min(a.start, b.start))


def f1_counts(pred, gt, tau):
    """Greedy one-to-one matching in order of predicted segments.

    Background segments take no part. Returns ``(tp, fp, fn)``.
    """
    gts = [s for s in gt if not s.background]
    used = [False] * len(gts)
    tp = fp = 0
    for p in pred:
        if p.background:
            continue
        best, best_iou = -1, -1.0
        for j, g in enumerate(gts):
            if used[j] or g.labels != p.labels:
                continue
            iou = _iou(p, g)
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= tau:
            tp += 1
            used[best] = True
        else:
            fp += 1
    return tp, fp, len(gts) - tp


def f1_at(pred, gt, tau):
    tp, fp, fn = f1_counts(pred, gt, tau)
    if tp + fp + fn == 0:
        return 100.0
    return 100.0 * 2 * tp / (2 * tp + fp + fn)


@dataclass
class MetricReport:
    ACC: float
    EDIT: float
    F1_10: float
    F1_25: float
    F1_50: float
    per_sample: list = field(default_factory=list)

    def headline(self):
        return dict(zip(HEADLINE, (self.ACC, self.EDIT, self.F1_10, self.F1_25, self.F1_50)))

    def to_dict(self):
        out = self.headline()
        out["per_sample"] = self.per_sample
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(d["ACC"], d["EDIT"], d["F1@10"], d["F1@25"], d["F1@50"],
                   list(d.get("per_sample", [])))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        return isinstance(other, MetricReport) and asdict(self) == asdict(other)


def score_sample(pred, gt):
    ps, gs = to_segments(pred), to_segments(gt)
    row = {"ACC": frame_accuracy(pred, gt), "EDIT": edit_score(ps, gs)}
    for tau in THRESHOLDS:
        row[f"F1@{round(tau * 100)}"] = f1_at(ps, gs, tau)
    row["frames"] = int(np.asarray(gt).shape[0])
    row["correct_frames"] = int(round(row["ACC"] * row["frames"] / 100.0))
    return row


def evaluate(predictions, ground_truths, ids=None):
    """Aggregate metrics over aligned lists of binary L x C matrices.

    ACC pools frames across samples; EDIT and F1 average per-sample scores.
    """
    if len(predictions) != len(ground_truths):
        raise ContractError("prediction and ground-truth lists differ in length")
    if not predictions:
        raise ContractError("cannot evaluate an empty set")
    rows = []
    for i, (p, g) in enumerate(zip(predictions, ground_truths)):
        row = score_sample(p, g)
        row["id"] = ids[i] if ids is not None else i
        rows.append(row)
    frames = sum(r["frames"] for r in rows)
    acc = 100.0 * sum(r["correct_frames"] for r in rows) / frames

    def avg(key):
        return float(np.mean([r[key] for r in rows]))

    return MetricReport(acc, avg("EDIT"), avg("F1@10"), avg("F1@25"), avg("F1@50"), rows)
