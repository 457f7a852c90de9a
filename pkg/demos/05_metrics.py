# Frame accuracy, edit score and segmental F1 over label-set segments.
import numpy as np

from segdiff import metrics

gt = np.zeros((30, 3), dtype=np.uint8)
gt[3:12, 0] = 1
gt[8:20, 1] = 1
gt[22:28, 2] = 1

pred = gt.copy()
pred[12:14, 0] = 1  # boundary drift
pred[24, 2] = 0  # one-frame hole splits a segment

for s in metrics.to_segments(gt):
    print(f"[{s.start:2d}, {s.end:2d}) {set(s.labels) or '{}'}")

row = metrics.score_sample(pred, gt)
print({k: round(row[k], 2) for k in metrics.HEADLINE})

rep = metrics.evaluate([pred, gt], [gt, gt], ids=["drifted", "perfect"])
print(rep.to_json()[:200], "...")
