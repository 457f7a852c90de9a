"""Static SVG timelines comparing a predicted label sequence with ground truth.

Three horizontal bands: ground truth, prediction, and a per-frame overlay
that is blue where the prediction's label set matches and green where it
does not. Each segment gets a color derived from its label set; empty label
sets use the background color.
"""

from __future__ import annotations

import colorsys
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from . import metrics
from .numkit import ContractError

CORRECT = "#1f5fd6"
WRONG = "#2ca02c"
BACKGROUND = "#eeeeee"

WIDTH = 800
BAND = 24
GAP = 8
LABEL_W = 90


def labelset_color(labels):
    """Deterministic color for a non-empty label set."""
    if not labels:
        return BACKGROUND
    key = sum(1 << c for c in labels)
    hue = (key * 0.61803398875) % 1.0
    r, g, b = colorsys.hls_to_rgb(hue, 0.55, 0.6)
    return "#%02x%02x%02x" % (round(r * 255), round(g * 255), round(b * 255))


def _rect(x, y, w, h, fill, title=None):
    body = f'<rect x="{x:.3f}" y="{y}" width="{w:.3f}" height="{h}" fill="{fill}"'
    if title is None:
        return body + "/>"
    return body + f"><title>{escape(title)}</title></rect>"


def _segments_band(segs, y, scale):
    out = []
    for s in segs:
        name = "{" + ",".join(str(c) for c in s.labels) + "}"
        out.append(_rect(LABEL_W + s.start * scale, y, (s.end - s.start) * scale, BAND,
                         labelset_color(s.labels), f"{name} [{s.start}, {s.end})"))
    return out


def render_timeline(pred, gt, title="timeline"):
    """Return SVG text for one aligned (prediction, ground truth) pair."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ContractError(f"prediction {pred.shape} and ground truth {gt.shape} are not aligned")
    if pred.ndim != 2 or pred.shape[0] == 0:
        raise ContractError(f"expected a non-empty L x C label matrix, got {pred.shape}")
    L = gt.shape[0]
    scale = (WIDTH - LABEL_W) / L
    height = 3 * BAND + 4 * GAP
    rows = [("ground truth", GAP), ("prediction", 2 * GAP + BAND), ("overlay", 3 * GAP + 2 * BAND)]
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="#ffffff"/>',
    ]
    for name, y in rows:
        parts.append(f'<text x="4" y="{y + BAND - 7}" font-family="sans-serif" font-size="12">'
                     f"{escape(name)}</text>")
        parts.append(_rect(LABEL_W, y, WIDTH - LABEL_W, BAND, BACKGROUND))
    parts += _segments_band(metrics.to_segments(gt), rows[0][1], scale)
    parts += _segments_band(metrics.to_segments(pred), rows[1][1], scale)
    match = np.all((pred > 0.5) == (gt > 0.5), axis=1).astype(np.uint8)[:, None]
    for s in metrics.to_segments(match):
        color = CORRECT if s.labels else WRONG
        parts.append(_rect(LABEL_W + s.start * scale, rows[2][1], (s.end - s.start) * scale, BAND,
                           color, ("correct" if s.labels else "wrong") + f" [{s.start}, {s.end})"))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_many(pairs):
    """Stack several timelines vertically; ``pairs`` is a list of (name, pred, gt)."""
    blocks = [render_timeline(p, g, name) for name, p, g in pairs]
    if not pairs:
        raise ContractError("nothing to render")
    height = 3 * BAND + 4 * GAP + 16
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height * len(pairs)}">',
    ]
    for i, ((name, _, _), block) in enumerate(zip(pairs, blocks)):
        inner = block.split("\n", 1)[1].rstrip("\n")
        parts.append(f'<g transform="translate(0,{i * height + 16})" id={quoteattr(name)}>')
        parts.append(f'<text x="4" y="-3" font-family="sans-serif" font-size="12">{escape(name)}</text>')
        parts.append(inner)
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
