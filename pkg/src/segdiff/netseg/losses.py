"""Binary cross-entropy plus a boundary-alignment term, equally weighted.

The boundary signal of a label sequence is ``b_t = max_c |y[t+1, c] - y[t, c]|``
(length L - 1), smoothed with the triangular kernel ``[1, 2, 1] / 4`` under
zero padding. The boundary term is the mean squared error between the
smoothed signals of prediction and ground truth.
"""

from __future__ import annotations

import math

import numpy as np

from .. import numkit as nk

EPS = 1e-6
SMOOTH = (0.25, 0.5, 0.25)


def smoothing_matrix(n):
    """(n, n) matrix applying the triangular kernel to a row vector."""
    m = np.zeros((n, n))
    for i in range(n):
        m[i, i] = SMOOTH[1]
        if i > 0:
            m[i - 1, i] = SMOOTH[0]
        if i + 1 < n:
            m[i + 1, i] = SMOOTH[2]
    return m


def boundary_signal(y):
    """Unsmoothed boundary strength for an (L, C) or (B, L, C) tensor."""
    y = nk.as_tensor(y)
    if y.ndim == 2:
        diff = nk.sub(y[1:], y[:-1])
    else:
        diff = nk.sub(y[:, 1:], y[:, :-1])
    return nk.max(nk.abs(diff), axis=-1)


def _smooth(b):
    n = b.shape[-1]
    k = nk.Tensor(smoothing_matrix(n))
    if b.ndim == 1:
        return nk.reshape(nk.matmul(nk.reshape(b, (1, n)), k), (n,))
    return nk.matmul(b, k)


def bce(pred, gt):
    pred = nk.clip(nk.as_tensor(pred), EPS, 1.0 - EPS)
    gt = np.asarray(gt, dtype=np.float64)
    ll = nk.add(nk.mul(nk.log(pred), nk.Tensor(gt)),
                nk.mul(nk.log(nk.sub(1.0, pred)), nk.Tensor(1.0 - gt)))
    return nk.mul(nk.mean(ll), -1.0)


def boundary_loss(pred, gt):
    pred = nk.as_tensor(pred)
    if pred.shape[-2] < 2:
        return nk.Tensor(0.0)
    gt_b = _smooth(boundary_signal(nk.Tensor(np.asarray(gt, dtype=np.float64))))
    pred_b = _smooth(boundary_signal(pred))
    return nk.mean(nk.square(nk.sub(pred_b, nk.constant(gt_b))))


def segmentation_loss(pred, gt):
    """BCE + boundary loss for one branch; ``gt`` must be binary."""
    gt = np.asarray(gt)
    if not np.all((gt == 0) | (gt == 1)):
        raise nk.ContractError("ground-truth labels must be binary")
    pred = nk.as_tensor(pred)
    if pred.shape != gt.shape:
        raise nk.DimensionError(f"loss: prediction {pred.shape} vs labels {gt.shape}")
    return nk.add(bce(pred, gt), boundary_loss(pred, gt))


BCE_OF_HALF = math.log(2.0)
