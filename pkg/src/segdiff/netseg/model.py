"""Dual-branch conditional denoiser for multi-label frame sequences.

Each branch owns an encoder (dilated residual convolutions), one side of the
HP-xLSTM pair, and a decoder that maps a noisy label sequence plus the
condition bundle to clean-label probabilities. Holistic and partial branches
share architecture but not parameters.
"""

from __future__ import annotations

import math
import zlib
from collections import OrderedDict

import numpy as np

from .. import diffusion, fourier, hpxlstm
from .. import numkit as nk
from ..config import RunConfig

BRANCHES = ("h", "p")


def timestep_embedding(t, dim):
    """Sinusoidal embedding of integer timesteps, shape (len(t), dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    args = t[:, None] * freqs[None]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=1)
    return emb


def _group_rng(seed, group):
    return np.random.default_rng([seed, zlib.crc32(group.encode())])


class SegDiffModel:
    """Parameters live in ``self.params`` (an ordered name -> Tensor map)."""

    def __init__(self, cfg: RunConfig, in_dim: int, num_classes: int):
        cfg.validate()
        self.cfg = cfg
        self.in_dim = in_dim
        self.num_classes = num_classes
        self.schedule = diffusion.build_schedule(cfg.timesteps, cfg.schedule, eta=cfg.eta)
        self.params = OrderedDict()
        for b in BRANCHES:
            self._init_encoder(b)
        for b in BRANCHES:
            rng = _group_rng(cfg.seed, f"xl_{b}")
            for name, p in hpxlstm.init_branch_params(cfg.d_model, rng, forget_bias=cfg.forget_bias).items():
                self._add(f"xl_{b}.{name}", p.data)
        for b in BRANCHES:
            self._init_decoder(b)

    # ---- parameters ----------------------------------------------------

    def _add(self, name, value):
        # parameters are kept float32-representable so checkpoints are exact
        data = np.asarray(value, dtype=np.float32).astype(np.float64)
        self.params[name] = nk.Tensor(data, requires_grad=True, name=name)

    def _weight(self, name, shape, gain=1.0):
        """Normal init scaled by fan-in, drawn from a stream keyed by ``name``."""
        fan_in = int(np.prod(shape[:-1]))
        self._add(name, _group_rng(self.cfg.seed, name).normal(0.0, gain / math.sqrt(fan_in), shape))

    def _zeros(self, name, n):
        self._add(name, np.zeros(n))

    def _init_encoder(self, b):
        c = self.cfg
        pre = f"enc_{b}"
        self._weight(f"{pre}.in_w", (self.in_dim, c.enc_maps))
        self._zeros(f"{pre}.in_b", c.enc_maps)
        for i in range(c.enc_layers):
            self._weight(f"{pre}.l{i}.conv_w", (c.kernel_size, c.enc_maps, c.enc_maps))
            self._zeros(f"{pre}.l{i}.conv_b", c.enc_maps)
            self._weight(f"{pre}.l{i}.mix_w", (c.enc_maps, c.enc_maps))
            self._zeros(f"{pre}.l{i}.mix_b", c.enc_maps)
        self._weight(f"{pre}.out_w", (c.enc_maps, c.d_model))
        self._zeros(f"{pre}.out_b", c.d_model)

    @property
    def cond_dim(self):
        d = self.cfg.d_model
        return 2 * d if self.cfg.no_dft_cond else 4 * d

    def _init_decoder(self, b):
        c = self.cfg
        pre = f"dec_{b}"
        self._weight(f"{pre}.in_w", (self.num_classes + self.cond_dim, c.dec_maps))
        self._zeros(f"{pre}.in_b", c.dec_maps)
        self._weight(f"{pre}.time_w", (c.time_dim, c.dec_maps))
        self._zeros(f"{pre}.time_b", c.dec_maps)
        for i in range(c.dec_layers):
            self._weight(f"{pre}.l{i}.time_w", (c.dec_maps, c.dec_maps))
            self._zeros(f"{pre}.l{i}.time_b", c.dec_maps)
            self._weight(f"{pre}.l{i}.conv_w", (c.kernel_size, c.dec_maps, c.dec_maps))
            self._zeros(f"{pre}.l{i}.conv_b", c.dec_maps)
            self._weight(f"{pre}.l{i}.mix_w", (c.dec_maps, c.dec_maps))
            self._zeros(f"{pre}.l{i}.mix_b", c.dec_maps)
        self._weight(f"{pre}.head_w", (c.dec_maps, self.num_classes), gain=0.1)
        self._zeros(f"{pre}.head_b", self.num_classes)

    def branch_params(self, prefix):
        return {k[len(prefix) + 1:]: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    def parameter_groups(self):
        """Names of parameters each ablation flag disconnects."""
        p = list(self.params)
        partial = [n for n in p if n.startswith(("enc_p.", "xl_p.", "dec_p."))]
        xl = [n for n in p if n.startswith("xl_")]
        bca = [n for n in p if n.split(".")[-1] in ("W_Q", "W_K", "W_V")]
        # without a partial stream there is nothing to cross-attend to
        no_partial = partial + [n for n in bca if n not in partial]
        return {"no_partial": no_partial, "no_hpxlstm": xl, "no_bca": bca}

    @property
    def branches(self):
        return ("h",) if self.cfg.no_partial else BRANCHES

    # ---- forward pieces ------------------------------------------------

    def _p(self, name):
        return self.params[name]

    def _residual(self, h, prefix, dilation, rate, rng, training):
        c = nk.dilated_conv1d(h, self._p(prefix + ".conv_w"), dilation)
        c = nk.relu(nk.add_bias(c, self._p(prefix + ".conv_b")))
        c = nk.linear(c, self._p(prefix + ".mix_w"), self._p(prefix + ".mix_b"))
        c = nk.dropout(c, rate, rng, training)
        return nk.add(h, c)

    def encode(self, x, branch, training=False, rng=None):
        """(B, L, D_in) features -> (B, L, d) embedding."""
        x = nk.as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise nk.ConfigurationError(f"feature width {x.shape[-1]} != configured {self.in_dim}")
        squeeze = x.ndim == 2
        if squeeze:
            x = nk.reshape(x, (1,) + x.shape)
        pre = f"enc_{branch}"
        h = nk.linear(x, self._p(pre + ".in_w"), self._p(pre + ".in_b"))
        for i in range(self.cfg.enc_layers):
            h = self._residual(h, f"{pre}.l{i}", 2 ** i, self.cfg.enc_dropout, rng, training)
        z = nk.linear(h, self._p(pre + ".out_w"), self._p(pre + ".out_b"))
        return nk.reshape(z, z.shape[1:]) if squeeze else z

    def conditions(self, xh, xp, training=False, rng=None):
        """Encoder + HP-xLSTM + DFT; returns ``{branch: ConditionBundle}``."""
        c = self.cfg
        # both the encoder output and the recurrent output are RMS-normalized per
        # frame; the unnormalized mLSTM readout can be large when |n.q| is small
        zs = {"h": nk.rms_norm(self.encode(xh, "h", training, rng))}
        if not c.no_partial:
            zs["p"] = nk.rms_norm(self.encode(xp, "p", training, rng))
        if c.no_hpxlstm:
            z_hat = dict(zs)
        elif c.no_partial:
            z_hat = {"h": hpxlstm.mlstm_single(zs["h"], self.branch_params("xl_h"), c.forget_gate)}
        else:
            zh_hat, zp_hat = hpxlstm.hp_xlstm(zs["h"], zs["p"], self.branch_params("xl_h"),
                                              self.branch_params("xl_p"), c.forget_gate,
                                              coupled=not c.no_bca)
            z_hat = {"h": zh_hat, "p": zp_hat}
        return {b: fourier.make_conditions(zs[b], nk.rms_norm(z_hat[b])) for b in zs}

    def condition_tensor(self, bundle):
        L = bundle.length
        scale = 1.0 / math.sqrt(L) if self.cfg.dft_norm == "ortho" else 1.0
        return bundle.concat(include_frequency=not self.cfg.no_dft_cond, frequency_scale=scale)

    def denoise(self, y_t, t, cond, branch, training=False, rng=None):
        """Clean-label probabilities (B, L, C) from noisy labels and conditions.

        ``t`` is an int or a length-B sequence; ``cond`` is a ConditionBundle
        or an already concatenated (B, L, cond_dim) tensor.
        """
        c = self.cfg
        if isinstance(cond, fourier.ConditionBundle):
            cond = self.condition_tensor(cond)
        y_t = nk.as_tensor(y_t)
        cond = nk.as_tensor(cond)
        squeeze = y_t.ndim == 2
        if squeeze:
            y_t = nk.reshape(y_t, (1,) + y_t.shape)
            cond = nk.reshape(cond, (1,) + cond.shape)
        B, L, C = y_t.shape
        if C != self.num_classes or cond.shape[:2] != (B, L) or cond.shape[2] != self.cond_dim:
            raise nk.ContractError(f"denoise: labels {y_t.shape} / conditions {cond.shape} "
                                   f"do not fit C={self.num_classes}, cond_dim={self.cond_dim}")
        t = np.broadcast_to(np.asarray(t), (B,))
        pre = f"dec_{branch}"
        h = nk.linear(nk.concat([y_t, cond], axis=-1), self._p(pre + ".in_w"), self._p(pre + ".in_b"))
        emb = nk.Tensor(timestep_embedding(t, c.time_dim))
        emb = nk.relu(nk.linear(emb, self._p(pre + ".time_w"), self._p(pre + ".time_b")))
        for i in range(c.dec_layers):
            lp = f"{pre}.l{i}"
            shift = nk.linear(emb, self._p(lp + ".time_w"), self._p(lp + ".time_b"))
            h = nk.add(h, nk.expand(shift, 1, L))
            h = self._residual(h, lp, 2 ** i, c.dec_dropout, rng, training)
        out = nk.sigmoid(nk.linear(h, self._p(pre + ".head_w"), self._p(pre + ".head_b")))
        return nk.reshape(out, out.shape[1:]) if squeeze else out

    # ---- inference -----------------------------------------------------

    def signal_denoiser(self, branch):
        """Wrap :meth:`denoise` as a diffusion-space clean-signal estimator."""
        c = self.cfg

        def fn(y, t, cond):
            probs = self.denoise(nk.Tensor(y), t, cond, branch).data
            return diffusion.labels_to_signal(probs, c.label_scale, c.symmetric_labels)

        return fn

    def infer(self, holistic, partial, seed):
        """Sample both branches and merge.

        Returns ``(binary labels, merged probabilities, {branch: probabilities})``
        for one (L, D_in) sample pair.
        """
        c = self.cfg
        bundles = self.conditions(np.asarray(holistic)[None], np.asarray(partial)[None])
        per_branch = {}
        for i, b in enumerate(self.branches):
            cond = self.condition_tensor(bundles[b])
            L = cond.shape[1]
            traj = diffusion.sample(self.signal_denoiser(b), cond, self.schedule, c.sampling_steps,
                                    seed=[seed, i], shape=(1, L, self.num_classes))
            per_branch[b] = diffusion.signal_to_probs(traj[-1], c.label_scale, c.symmetric_labels)[0]
        merged = merge_branches(list(per_branch.values()))
        return binarize(merged, c.threshold), merged, per_branch


def merge_branches(probs):
    """Elementwise mean of per-branch probabilities."""
    out = np.zeros_like(probs[0])
    for p in probs:
        out = out + p
    return out / len(probs)


def binarize(probs, threshold=0.5):
    return (np.asarray(probs) > threshold).astype(np.uint8)
