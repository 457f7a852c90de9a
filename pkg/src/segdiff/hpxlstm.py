"""Dual-stream mLSTM whose input gates are coupled by bidirectional cross-attention.

Row-vector convention throughout: a projection is ``z @ W + b``. Inputs are
(L, d) or batched (B, L, d).

The matrix memory ``C`` and normalizer ``n`` are stored divided by
``exp(m)``, where ``m`` is the running log-scale stabilizer. The hidden-state
denominator is ``max(|n.q|, exp(-m))`` on the stored values, which is exactly
``max(|n.q|, 1)`` on the unscaled ones, so outputs do not depend on ``m``.
``m`` is carried as a constant and receives no gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numkit as nk

GATE_FLOOR = -1e4  # exp(GATE_FLOOR - m) underflows to exactly 0

PARAM_NAMES = ("W_q", "b_q", "W_k", "b_k", "W_v", "b_v", "w_i", "b_i",
               "w_f", "b_f", "W_o", "b_o", "W_Q", "W_K", "W_V")


@dataclass
class MLSTMState:
    C: object  # (d, d) or (B, d, d)
    n: object  # (d,) or (B, d)
    m: np.ndarray  # () or (B,)

    @classmethod
    def zeros(cls, d, batch=None):
        if batch is None:
            return cls(nk.Tensor(np.zeros((d, d))), nk.Tensor(np.zeros(d)), np.zeros(()))
        return cls(nk.Tensor(np.zeros((batch, d, d))), nk.Tensor(np.zeros((batch, d))),
                   np.zeros(batch))

    def unscaled(self):
        """Return (C, n) as plain arrays without the stabilizer scaling."""
        scale = np.exp(self.m)
        C = _data(self.C) * scale[..., None, None]
        n = _data(self.n) * scale[..., None]
        return C, n


def _data(x):
    return x.data if isinstance(x, nk.Tensor) else np.asarray(x)


def init_branch_params(d, rng, prefix="", forget_bias=3.0):
    """Fresh parameter set for one branch, in declaration order."""
    std = 1.0 / math.sqrt(d)

    def mat():
        return rng.normal(0.0, std, (d, d))

    raw = {
        "W_q": mat(), "b_q": np.zeros(d),
        "W_k": mat(), "b_k": np.zeros(d),
        "W_v": mat(), "b_v": np.zeros(d),
        "w_i": rng.normal(0.0, std, d), "b_i": np.zeros(()),
        "w_f": rng.normal(0.0, std, d), "b_f": np.full((), forget_bias),
        "W_o": mat(), "b_o": np.zeros(d),
        "W_Q": mat(), "W_K": mat(), "W_V": mat(),
    }
    return {k: nk.Tensor(raw[k], requires_grad=True, name=prefix + k) for k in PARAM_NAMES}


def _attend(zq, zk, zv, W_Q, W_K, W_V):
    d = zq.shape[-1]
    q = nk.matmul(zq, W_Q)
    k = nk.matmul(zk, W_K)
    v = nk.matmul(zv, W_V)
    k_t = nk.transpose(k, (0, 2, 1) if k.ndim == 3 else None)
    alpha = nk.softmax(nk.mul(nk.matmul(q, k_t), 1.0 / math.sqrt(d)), axis=-1)
    out = nk.matmul(alpha, v)
    return out, alpha


def bca(zh, zp, params_h, params_p, return_attention=False):
    """Bidirectional cross-attention between the two streams.

    The partial stream's gate input attends with holistic queries over partial
    keys and aggregates holistic values (using the partial branch's
    projections); the holistic stream's gate input is the mirror image.
    Returns ``(xh_tilde, xp_tilde)``.
    """
    if zh.shape != zp.shape:
        raise nk.ContractError(f"stream shapes differ: {zh.shape} vs {zp.shape}")
    xp, a_hp = _attend(zh, zp, zh, params_p["W_Q"], params_p["W_K"], params_p["W_V"])
    xh, a_ph = _attend(zp, zh, zp, params_h["W_Q"], params_h["W_K"], params_h["W_V"])
    if return_attention:
        return xh, xp, (a_ph, a_hp)
    return xh, xp


def input_gate_preact(x_tilde, params):
    """``x_tilde . w_i + b_i`` per frame."""
    return _affine_gate(x_tilde, params["w_i"], params["b_i"])


def _affine_gate(x, w, b):
    sub = {1: "d,d->", 2: "ld,d->l", 3: "bld,d->bl"}[x.ndim]
    return nk.add_scalar(nk.einsum(sub, x, w), b)


def _log_forget(f_pre, forget):
    if forget == "sigmoid":
        return nk.logsigmoid(f_pre)
    if forget == "exp":
        return f_pre
    raise nk.ConfigurationError(f"unknown forget gate {forget!r}")


def _projections(z, params):
    d = z.shape[-1]
    q = nk.linear(z, params["W_q"], params["b_q"])
    k = nk.add_bias(nk.mul(nk.matmul(z, params["W_k"]), 1.0 / math.sqrt(d)), params["b_k"])
    v = nk.linear(z, params["W_v"], params["b_v"])
    o = nk.sigmoid(nk.linear(z, params["W_o"], params["b_o"]))
    f_pre = _affine_gate(z, params["w_f"], params["b_f"])
    return q, k, v, o, f_pre


def mlstm_step(state, z_t, i_tilde, params, forget="sigmoid", step=None):
    """One recurrence step.

    ``z_t`` is (d,) or (B, d); ``i_tilde`` is the input-gate pre-activation,
    scalar or (B,), coming from the cross-attention path. Returns
    ``(new_state, h_t)``.
    """
    z_t = nk.as_tensor(z_t)
    i_tilde = nk.as_tensor(i_tilde)
    where = "" if step is None else f" at step {step}"
    # -inf is a legitimate "write nothing" gate; NaN and +inf are not
    if np.any(np.isnan(i_tilde.data)) or np.any(i_tilde.data == np.inf):
        raise nk.NumericError(f"non-finite input gate{where}")
    try:
        q, k, v, o, f_pre = _projections(z_t, params)
        log_f = _log_forget(f_pre, forget)
        i_c = nk.maximum(i_tilde, GATE_FLOOR)
        m_new = np.maximum(log_f.data + state.m, i_c.data)
        i_s = nk.stable_exp(i_c, m_new)
        f_s = nk.stable_exp(nk.add(log_f, nk.Tensor(np.broadcast_to(state.m, log_f.shape))), m_new)
        C = nk.add(nk.scale_rows(state.C, f_s), nk.scale_rows(nk.outer(v, k), i_s))
        n = nk.add(nk.scale_rows(state.n, f_s), nk.scale_rows(k, i_s))
        if z_t.ndim == 2:
            num = nk.einsum("bij,bj->bi", C, q)
            nq = nk.einsum("bi,bi->b", n, q)
        else:
            num = nk.einsum("ij,j->i", C, q)
            nq = nk.einsum("i,i->", n, q)
        den = nk.maximum(nk.abs(nq), nk.Tensor(np.exp(-m_new)))
        h_tilde = nk.scale_rows(num, nk.div(1.0, den))
        h = nk.mul(o, h_tilde)
    except nk.NumericError as e:
        raise nk.NumericError(f"{e}{where}") from None
    return MLSTMState(C, n, m_new), h


def stabilizer_path(log_f, i_tilde, m0=None):
    """Running stabilizer ``m_t = max(log f_t + m_{t-1}, i_t)`` over axis -1."""
    log_f = np.asarray(log_f)
    i_tilde = np.asarray(i_tilde)
    m = np.zeros(log_f.shape[:-1]) if m0 is None else np.asarray(m0, dtype=np.float64)
    out = np.empty_like(log_f)
    for t in range(log_f.shape[-1]):
        m = np.maximum(log_f[..., t] + m, i_tilde[..., t])
        out[..., t] = m
    return out


def mlstm_scan(z, i_tilde, params, forget="sigmoid"):
    """Run the recurrence left to right over a (B, L, d) sequence.

    Same arithmetic as repeated :func:`mlstm_step` from a zero state, with
    the per-frame projections and gates vectorized outside the loop.
    Returns (B, L, d) hidden states.
    """
    z = nk.as_tensor(z)
    i_tilde = nk.as_tensor(i_tilde)
    B, L, d = z.shape
    q, k, v, o, f_pre = _projections(z, params)
    log_f = _log_forget(f_pre, forget)
    i_c = nk.maximum(i_tilde, GATE_FLOOR)
    m = stabilizer_path(log_f.data, i_c.data)
    m_prev = np.concatenate([np.zeros((B, 1)), m[:, :-1]], axis=1)
    i_s = nk.stable_exp(i_c, m)
    f_s = nk.stable_exp(nk.add(log_f, nk.Tensor(m_prev)), m)
    # augment values with a ones column so one matrix carries both C and n
    v_aug = nk.concat([v, nk.Tensor(np.ones((B, L, 1)))], axis=-1)
    v_aug = nk.scale_rows(v_aug, i_s)
    r = nk.memory_scan(f_s, v_aug, k, q)  # (B, L, d+1)
    num = r[:, :, :d]
    nq = r[:, :, d]
    den = nk.maximum(nk.abs(nq), nk.Tensor(np.exp(-m)))
    h_tilde = nk.scale_rows(num, nk.div(1.0, den))
    return nk.mul(o, h_tilde)


def hp_xlstm(zh, zp, params_h, params_p, forget="sigmoid", coupled=True):
    """Holistic/partial mLSTM pair with cross-attended input gates.

    With ``coupled=False`` each branch's input gate reads its own features
    instead of the cross-attended ones. Returns ``(zh_hat, zp_hat)``.
    """
    if zh.shape != zp.shape:
        raise nk.ContractError(f"stream shapes differ: {zh.shape} vs {zp.shape}")
    squeeze = zh.ndim == 2
    if squeeze:
        zh, zp = nk.reshape(zh, (1,) + zh.shape), nk.reshape(zp, (1,) + zp.shape)
    if coupled:
        xh, xp = bca(zh, zp, params_h, params_p)
    else:
        xh, xp = zh, zp
    out_h = mlstm_scan(zh, input_gate_preact(xh, params_h), params_h, forget)
    out_p = mlstm_scan(zp, input_gate_preact(xp, params_p), params_p, forget)
    if squeeze:
        out_h, out_p = nk.reshape(out_h, out_h.shape[1:]), nk.reshape(out_p, out_p.shape[1:])
    return out_h, out_p


def mlstm_single(z, params, forget="sigmoid"):
    """Uncoupled branch: input gate from the branch's own features."""
    z = nk.as_tensor(z)
    squeeze = z.ndim == 2
    if squeeze:
        z = nk.reshape(z, (1,) + z.shape)
    out = mlstm_scan(z, input_gate_preact(z, params), params, forget)
    return nk.reshape(out, out.shape[1:]) if squeeze else out
