"""Tiny-shape gradient checks for every differentiable module, parameterized by seed."""

import numpy as np

from segdiff import fourier, hpxlstm
from segdiff import numkit as nk
from segdiff.config import RunConfig
from segdiff.netseg import losses
from segdiff.netseg.model import SegDiffModel

TOL = 1e-4
L, D_IN, C, D = 8, 5, 3, 4


def tiny_config(**kw):
    base = dict(d_model=D, enc_layers=2, enc_maps=4, dec_layers=2, dec_maps=4, time_dim=4,
                kernel_size=3, timesteps=50, sampling_steps=5)
    base.update(kw)
    return RunConfig(**base)


def _weights(rng, shape):
    return nk.Tensor(rng.normal(size=shape))


def _swap(model, name, loss):
    """Loss as a function of one named parameter."""

    def f(x):
        old = model.params[name]
        model.params[name] = x
        try:
            return loss()
        finally:
            model.params[name] = old

    return f, model.params[name].data


def perturb_params(model, rng, scale=0.3):
    # random parameters, including biases, so no gradient is trivially zero
    for p in model.params.values():
        p.data = p.data + scale * rng.normal(size=p.shape)


def cases(seed):
    """Yield ``(label, f, x)`` triples to feed :func:`segdiff.numkit.grad_check`."""
    rng = np.random.default_rng(seed)
    model = SegDiffModel(tiny_config(seed=seed), D_IN, C)
    perturb_params(model, rng)
    x = rng.normal(size=(1, L, D_IN))
    w_enc = _weights(rng, (1, L, D))
    enc_loss = lambda t: nk.sum(nk.mul(model.encode(t, "p"), w_enc))
    yield "encoder/input", enc_loss, x
    f, p = _swap(model, "enc_h.l1.conv_w", lambda: nk.sum(nk.mul(model.encode(nk.Tensor(x), "h"), w_enc)))
    yield "encoder/conv_w", f, p

    y_t = rng.normal(size=(1, L, C))
    cond = rng.normal(size=(1, L, model.cond_dim))
    w_dec = _weights(rng, (1, L, C))
    yield "decoder/noisy_labels", lambda t: nk.sum(nk.mul(model.denoise(t, [7], nk.Tensor(cond), "h"), w_dec)), y_t
    yield "decoder/conditions", lambda t: nk.sum(nk.mul(model.denoise(nk.Tensor(y_t), [7], t, "p"), w_dec)), cond
    f, p = _swap(model, "dec_p.l0.time_w", lambda: nk.sum(nk.mul(model.denoise(nk.Tensor(y_t), [30], nk.Tensor(cond), "p"), w_dec)))
    yield "decoder/time_w", f, p

    ph = hpxlstm.init_branch_params(D, rng)
    pp = hpxlstm.init_branch_params(D, rng)
    zh, zp = rng.normal(size=(2, L, D))
    w_x = _weights(rng, (2, L, D))

    def xl_loss(a, b):
        oh, op = hpxlstm.hp_xlstm(a, b, ph, pp)
        return nk.add(nk.sum(nk.mul(oh, w_x[0])), nk.sum(nk.mul(op, w_x[1])))

    yield "hpxlstm/holistic", lambda t: xl_loss(t, nk.Tensor(zp)), zh
    yield "hpxlstm/partial", lambda t: xl_loss(nk.Tensor(zh), t), zp
    for name in ("W_K", "w_i", "W_v"):
        def f(t, name=name):
            old = pp[name]
            pp[name] = t
            try:
                return xl_loss(nk.Tensor(zh), nk.Tensor(zp))
            finally:
                pp[name] = old
        yield f"hpxlstm/{name}", f, pp[name].data

    w_f = _weights(rng, (L, 2 * D))
    yield "dft/condition", lambda t: nk.sum(nk.mul(fourier.dft_time(t), w_f)), zh
    z = rng.normal(size=(1, L, D))
    w_c = _weights(rng, (1, L, model.cond_dim))
    yield "dft/bundle", lambda t: nk.sum(nk.mul(model.condition_tensor(fourier.make_conditions(nk.Tensor(z), t)), w_c)), z

    gt = (rng.random((L, C)) > 0.5).astype(float)
    pred = rng.uniform(0.1, 0.9, (L, C))
    yield "loss/bce", lambda t: losses.bce(t, gt), pred
    yield "loss/boundary", lambda t: losses.boundary_loss(t, gt), pred
    yield "loss/total", lambda t: losses.segmentation_loss(t, gt), pred
