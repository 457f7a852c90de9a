"""Adam, the diffusion training step, the epoch loop and split evaluation."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import diffusion, metrics
from .. import numkit as nk
from .losses import segmentation_loss
from .model import SegDiffModel

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class Adam:
    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)

    def update(self, params, grads):
        """Apply one step. ``grads`` maps names to arrays; missing names count as zero."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m.get(name, np.zeros_like(p.data))
            v = self.v.get(name, np.zeros_like(p.data))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            self.m[name], self.v[name] = m, v
            new = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            # round to float32 so an SDM1 checkpoint captures the exact state
            p.data = new.astype(np.float32).astype(np.float64)

    def save(self, path):
        arrays = {f"m/{k}": v for k, v in self.m.items()}
        arrays.update({f"v/{k}": v for k, v in self.v.items()})
        with open(path, "wb") as fh:
            np.savez(fh, __t=np.array(self.t), **arrays)

    @classmethod
    def load(cls, path, cfg):
        opt = cls.from_config(cfg)
        with np.load(path) as z:
            opt.t = int(z["__t"])
            for key in z.files:
                if key.startswith("m/"):
                    opt.m[key[2:]] = z[key].copy()
                elif key.startswith("v/"):
                    opt.v[key[2:]] = z[key].copy()
        return opt


def _stack(batch, idx):
    return np.stack([batch[i] for i in idx])


def batch_loss(model, xh, xp, y, rng, training=True):
    """Summed per-branch loss on one batch, with fresh timesteps and noise.

    Returns ``(total, {branch: loss})``; call inside a :class:`~segdiff.numkit.Tape`
    to get gradients.
    """
    c = model.cfg
    B = y.shape[0]
    t = rng.integers(1, c.timesteps + 1, size=B)
    bundles = model.conditions(xh, xp, training=training, rng=rng)
    y_sig = diffusion.labels_to_signal(y, c.label_scale, c.symmetric_labels)
    losses = {}
    for b in model.branches:
        eps = rng.standard_normal(y.shape)
        y_t = np.stack([diffusion.forward_noise(y_sig[i], int(t[i]), eps[i], model.schedule)
                        for i in range(B)])
        pred = model.denoise(nk.Tensor(y_t), t, bundles[b], b, training=training, rng=rng)
        losses[b] = segmentation_loss(pred, y)
    total = losses["h"]
    for b in model.branches[1:]:
        total = nk.add(total, losses[b])
    return total, losses


def step_rng(seed, step):
    return np.random.default_rng([seed, 0x57E9, step])


def train_step(model, optimizer, xh, xp, y, step):
    """One gradient update on a batch. Returns the scalar loss before the update."""
    rng = step_rng(model.cfg.seed, step)
    with nk.Tape() as tape:
        try:
            loss, _ = batch_loss(model, xh, xp, y, rng)
        except nk.NumericError as e:
            raise TrainingError(f"numeric failure at step {step}: {e}") from None
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss {value} at step {step}")
    grads = tape.backward(loss)
    by_name = {name: grads[p] for name, p in model.params.items() if p in grads}
    optimizer.update(model.params, by_name)
    return value


def epoch_order(seed, epoch, n):
    return np.random.default_rng([seed, 0xE90C, epoch]).permutation(n)


def fit(model, data, optimizer=None, start_epoch=0, on_step=None, on_epoch=None):
    """Train on ``data`` = list of (holistic, partial, labels) up to ``cfg.epochs``.

    ``on_step(record)`` receives ``{"step", "epoch", "loss", "wall_ms"}``;
    ``on_epoch(epoch, optimizer)`` runs after every finished epoch.
    Returns the optimizer.
    """
    c = model.cfg
    optimizer = optimizer or Adam.from_config(c)
    xh = [d[0] for d in data]
    xp = [d[1] for d in data]
    ys = [np.asarray(d[2], dtype=np.float64) for d in data]
    step = optimizer.t
    last = None
    for epoch in range(start_epoch, c.epochs):
        order = epoch_order(c.seed, epoch, len(data))
        for s in range(0, len(order), c.batch_size):
            idx = order[s:s + c.batch_size]
            t0 = time.perf_counter()
            try:
                loss = train_step(model, optimizer, _stack(xh, idx), _stack(xp, idx), _stack(ys, idx), step)
            except TrainingError as e:
                raise TrainingError(f"{e} (epoch {epoch}, last finite loss {last})") from None
            last = loss
            if on_step is not None:
                on_step({"step": step, "epoch": epoch, "loss": loss,
                         "wall_ms": (time.perf_counter() - t0) * 1000.0})
            step += 1
        if on_epoch is not None:
            on_epoch(epoch, optimizer)
    return optimizer


def inference_seed(seed, index):
    return [seed, 0x1AF, index]


def worker_count(requested):
    cap = os.environ.get("SEGDIFF_THREADS")
    n = max(1, int(requested))
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def predict(model, samples, workers=1):
    """Binary predictions for ``samples`` = list of (holistic, partial, ...) tuples.

    Sample ``i`` always uses the same sampling seed, so results do not depend
    on the worker count.
    """

    def one(i):
        return model.infer(samples[i][0], samples[i][1], inference_seed(model.cfg.seed, i))[0]

    n = worker_count(workers)
    if n == 1:
        return [one(i) for i in range(len(samples))]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, range(len(samples))))


def evaluate_model(model, samples, ids=None, workers=1):
    preds = predict(model, [(s[0], s[1]) for s in samples], workers)
    return metrics.evaluate(preds, [s[2] for s in samples], ids)


def build_model(cfg, data):
    """Model sized from the first sample of ``data``."""
    in_dim = data[0][0].shape[1]
    num_classes = data[0][2].shape[1]
    return SegDiffModel(cfg, in_dim, num_classes)
