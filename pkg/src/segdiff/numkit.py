"""Small dense tensor library with a reverse-mode gradient tape.

Values are float64 numpy arrays of rank 0 to 3. Operations executed while a
:class:`Tape` is active are recorded in order; :meth:`Tape.backward` replays
them in exact reverse order and accumulates gradients additively.

Broadcasting is deliberately limited to scalar-with-tensor. Anything else
(biases, per-frame gates) goes through explicit ops such as :func:`add_bias`,
:func:`expand` or :func:`einsum`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


class ContractError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


_local = threading.local()


def _active_tape():
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim > 3:
            raise DimensionError(f"rank {arr.ndim} tensors are not supported")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x):
    """Wrap ``x`` as a tensor that never receives a gradient."""
    return Tensor(x.data if isinstance(x, Tensor) else x)


@dataclass
class _SliceGrad:
    index: object
    value: np.ndarray


@dataclass
class _Node:
    out: Tensor
    parents: tuple
    backward: object


@dataclass
class GradReport:
    passed: bool
    max_rel_error: float
    analytic: np.ndarray
    numeric: np.ndarray
    tol: float


@dataclass
class Tape:
    """Ordered record of executed operations.

    Use as a context manager; ops run inside the ``with`` block are recorded.
    """

    nodes: list = field(default_factory=list)

    def __enter__(self):
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def record(self, out, parents, backward):
        out._tape = self
        self.nodes.append(_Node(out, parents, backward))

    def backward(self, loss):
        """Propagate d(loss)/d(.) to every ``requires_grad`` leaf.

        Returns a dict mapping each leaf tensor to its gradient array; the
        same arrays are stored on ``tensor.grad``.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            parent_grads = node.backward(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if parent._tape is None:
                    leaves[key] = parent
                acc = grads.get(key)
                if isinstance(pg, _SliceGrad):
                    if acc is None:
                        acc = np.zeros_like(parent.data)
                        grads[key] = acc
                    acc[pg.index] += pg.value
                elif acc is None:
                    grads[key] = np.array(pg, dtype=np.float64).reshape(parent.shape)
                else:
                    acc += pg
        out = {}
        for key, leaf in leaves.items():
            leaf.grad = grads[key]
            out[leaf] = leaf.grad
        return out


def backward(loss):
    """Run the backward pass on the tape that produced ``loss``."""
    if loss._tape is None:
        raise ContractError("loss was not produced by taped operations")
    return loss._tape.backward(loss)


def _check_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by {op}")


def _make(data, parents, backward_fn, op):
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._tape = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        tape = _active_tape()
        if tape is not None:
            tape.record(out, parents, backward_fn)
    return out


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _scalar(x):
    return isinstance(x, (int, float, np.floating, np.integer))


# ---- elementwise -----------------------------------------------------------

def add(a, b):
    if _scalar(b):
        a = as_tensor(a)
        return _make(a.data + b, (a,), lambda g: (g,), "add")
    if _scalar(a):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    if _scalar(b):
        return add(a, -b)
    if _scalar(a):
        b = as_tensor(b)
        return _make(a - b.data, (b,), lambda g: (-g,), "sub")
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    if _scalar(b):
        a = as_tensor(a)
        return _make(a.data * b, (a,), lambda g: (g * b,), "mul")
    if _scalar(a):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    return _make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def div(a, b):
    if _scalar(b):
        return mul(a, 1.0 / b)
    if _scalar(a):
        b = as_tensor(b)
        out = a / b.data
        return _make(out, (b,), lambda g: (-g * out / b.data,), "div")
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "div")
    out = a.data / b.data
    return _make(out, (a, b), lambda g: (g / b.data, -g * out / b.data), "div")


def exp(x):
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x):
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _make(out, (x,), lambda g: (g / x.data,), "log")


def sigmoid(x):
    x = as_tensor(x)
    out = _np_sigmoid(x.data)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def logsigmoid(x):
    x = as_tensor(x)
    out = np_logsigmoid(x.data)
    return _make(out, (x,), lambda g: (g * _np_sigmoid(-x.data),), "logsigmoid")


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def abs(x):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    sign = np.sign(x.data)
    return _make(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


def square(x):
    x = as_tensor(x)
    return _make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def maximum(a, b):
    """Elementwise max; ties send the gradient to ``a``."""
    a = as_tensor(a)
    if _scalar(b):
        mask = a.data >= b
        return _make(np.maximum(a.data, b), (a,), lambda g: (g * mask,), "maximum")
    b = as_tensor(b)
    _same_shape(a, b, "maximum")
    mask = a.data >= b.data
    return _make(np.where(mask, a.data, b.data), (a, b),
                 lambda g: (g * mask, g * ~mask), "maximum")


def clip(x, lo, hi):
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clip")


def stable_exp(x, m):
    """``exp(x - m)`` with ``m`` a log-scale stabilizer.

    ``m`` is treated as a constant (no gradient flows into it). When ``m`` is
    the running max of ``x`` the result lies in ``[0, 1]``.
    """
    x = as_tensor(x)
    m_data = m.data if isinstance(m, Tensor) else np.asarray(m, dtype=np.float64)
    shifted = np.minimum(x.data - m_data, 700.0)
    out = np.exp(shifted)
    return _make(out, (x,), lambda g: (g * out,), "stable_exp")


def dropout(x, rate, rng, training=True):
    if not training or rate <= 0.0:
        return x
    x = as_tensor(x)
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def _np_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def np_logsigmoid(x):
    return -np.logaddexp(0.0, -x)


# ---- linear algebra --------------------------------------------------------

def matmul(a, b):
    """Matrix product for 1D@2D, 2D@2D, batched 3D@2D and 3D@3D."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 1 and b.ndim == 2 and a.shape[0] == b.shape[0]:
        return _make(a.data @ b.data, (a, b), lambda g: (b.data @ g, np.outer(a.data, g)), "matmul")
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if b.ndim == 3 and (a.ndim != 3 or a.shape[0] != b.shape[0]):
        raise DimensionError(f"matmul: batch mismatch {a.shape} and {b.shape}")
    out = a.data @ b.data

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if a.ndim == 3 and b.ndim == 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _make(out, (a, b), back, "matmul")


def einsum(subscripts, a, b):
    """Two-operand einsum; every index of an operand must appear elsewhere."""
    a, b = as_tensor(a), as_tensor(b)
    lhs, out_sub = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    for s, other in ((sa, sb), (sb, sa)):
        if any(c not in other and c not in out_sub for c in s):
            raise DimensionError(f"einsum: index in {s!r} is reduced within one operand")
    try:
        out = np.einsum(subscripts, a.data, b.data)
    except ValueError as e:
        raise DimensionError(f"einsum {subscripts}: {e}") from None

    def back(g):
        ga = np.einsum(f"{out_sub},{sb}->{sa}", g, b.data) if a.requires_grad else None
        gb = np.einsum(f"{out_sub},{sa}->{sb}", g, a.data) if b.requires_grad else None
        return ga, gb

    return _make(np.asarray(out, dtype=np.float64), (a, b), back, "einsum")


def outer(u, v):
    return einsum("bi,bj->bij", u, v) if as_tensor(u).ndim == 2 else einsum("i,j->ij", u, v)


def add_bias(x, b):
    """Add a vector along the last axis of ``x``."""
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or b.shape[0] != x.shape[-1]:
        raise DimensionError(f"add_bias: bias {b.shape} does not fit {x.shape}")
    axes = tuple(range(x.ndim - 1))
    return _make(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=axes)), "add_bias")


def scale_rows(x, s):
    """Multiply ``x`` by ``s`` broadcast over trailing axes.

    ``s.shape`` must equal the leading ``s.ndim`` dimensions of ``x``; a 0-d
    ``s`` scales everything.
    """
    x, s = as_tensor(x), as_tensor(s)
    if x.shape[:s.ndim] != s.shape:
        raise DimensionError(f"scale_rows: {s.shape} is not a prefix of {x.shape}")
    extra = x.ndim - s.ndim
    sb = s.data.reshape(s.shape + (1,) * extra)
    trailing = tuple(range(s.ndim, x.ndim))

    def back(g):
        return g * sb, (g * x.data).sum(axis=trailing)

    return _make(x.data * sb, (x, s), back, "scale_rows")


def add_scalar(x, s):
    """``x + s`` for a 0-d tensor ``s``."""
    x, s = as_tensor(x), as_tensor(s)
    if s.ndim != 0:
        raise DimensionError(f"add_scalar: expected 0-d, got {s.shape}")
    return _make(x.data + s.data, (x, s), lambda g: (g, g.sum()), "add_scalar")


def linear(x, w, b=None):
    y = matmul(x, w)
    return y if b is None else add_bias(y, b)


def rms_norm(x, eps=1e-6):
    """Scale each row (last axis) to unit root-mean-square."""
    x = as_tensor(x)
    inv = exp(mul(log(add(mean(square(x), axis=-1), eps)), -0.5))
    return scale_rows(x, inv)


# ---- reductions ------------------------------------------------------------

def _check_axis(x, axis, op):
    if axis is not None and x.shape[axis] == 0:
        raise DimensionError(f"{op}: empty axis {axis}")


def sum(x, axis=None):  # noqa: A001
    x = as_tensor(x)
    _check_axis(x, axis, "sum")
    out = x.data.sum(axis=axis)

    def back(g):
        if axis is None:
            return (np.full(x.shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _make(np.asarray(out), (x,), back, "sum")


def mean(x, axis=None):
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    if n == 0:
        raise DimensionError("mean: empty axis")
    return mul(sum(x, axis), 1.0 / n)


def max(x, axis=None):  # noqa: A001
    """Reduce-max; the gradient goes to the first maximizing entry."""
    x = as_tensor(x)
    _check_axis(x, axis, "max")
    if x.data.size == 0:
        raise DimensionError("max: empty tensor")
    if axis is None:
        idx = np.unravel_index(np.argmax(x.data), x.shape)
        out = x.data[idx]

        def back(g):
            gx = np.zeros_like(x.data)
            gx[idx] = g
            return (gx,)

        return _make(np.asarray(out), (x,), back, "max")
    arg = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, arg, axis=axis).squeeze(axis)

    def back(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, arg, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _make(out, (x,), back, "max")


def softmax(x, axis=-1):
    x = as_tensor(x)
    _check_axis(x, axis, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), back, "softmax")


# ---- shape plumbing --------------------------------------------------------

def reshape(x, shape):
    x = as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(x, index):
    x = as_tensor(x)
    out = np.array(x.data[index], dtype=np.float64)
    return _make(out, (x,), lambda g: (_SliceGrad(index, g),), "getitem")


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    out = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([0] + [x.shape[axis] for x in xs])

    def back(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(xs)))

    return _make(out, tuple(xs), back, "concat")


def stack(xs, axis=0):
    xs = [as_tensor(x) for x in xs]
    out = np.stack([x.data for x in xs], axis=axis)

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _make(out, tuple(xs), back, "stack")


def unstack(x, axis=0):
    x = as_tensor(x)
    out = []
    for i in range(x.shape[axis]):
        index = (slice(None),) * (axis % x.ndim) + (i,)
        out.append(getitem(x, index))
    return out


def expand(x, axis, n):
    """Insert a new axis at ``axis`` and repeat ``x`` ``n`` times along it."""
    x = as_tensor(x)
    out = np.repeat(np.expand_dims(x.data, axis), n, axis=axis)
    if out.ndim > 3:
        raise DimensionError("expand would exceed rank 3")
    return _make(out, (x,), lambda g: (g.sum(axis=axis),), "expand")


# ---- convolution -----------------------------------------------------------

def dilated_conv1d(x, kernel, dilation=1):
    """Centered dilated convolution along time with zero padding.

    ``x`` is (L, D_in) or (B, L, D_in); ``kernel`` is (K, D_in, D_out) with K
    odd. Output keeps length L: ``out[t] = sum_k x[t + (k - K//2)*dilation] @ kernel[k]``.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if dilation < 1:
        raise ConfigurationError(f"dilation must be >= 1, got {dilation}")
    if kernel.ndim != 3 or kernel.shape[0] % 2 == 0:
        raise ConfigurationError(f"kernel must be (K, D_in, D_out) with odd K, got {kernel.shape}")
    if x.ndim not in (2, 3) or x.shape[-1] != kernel.shape[1]:
        raise DimensionError(f"dilated_conv1d: input {x.shape} vs kernel {kernel.shape}")
    batched = x.ndim == 3
    xd = x.data if batched else x.data[None]
    K = kernel.shape[0]
    L = xd.shape[1]
    pad = (K // 2) * dilation
    xp = np.pad(xd, ((0, 0), (pad, pad), (0, 0)))
    w = kernel.data
    out = np.zeros((xd.shape[0], L, w.shape[2]))
    for k in range(K):
        out += xp[:, k * dilation:k * dilation + L] @ w[k]

    def back(g):
        g3 = g if batched else g[None]
        gxp = np.zeros_like(xp)
        gw = np.empty_like(w)
        flat_g = g3.reshape(-1, g3.shape[-1])
        for k in range(K):
            window = xp[:, k * dilation:k * dilation + L]
            gw[k] = window.reshape(-1, window.shape[-1]).T @ flat_g
            gxp[:, k * dilation:k * dilation + L] += g3 @ w[k].T
        gx = gxp[:, pad:pad + L]
        return (gx if batched else gx[0]), gw

    return _make(out if batched else out[0], (x, kernel), back, "dilated_conv1d")


# ---- recurrence ------------------------------------------------------------

def memory_scan(f, v, k, q):
    """Decayed outer-product memory read out by queries.

    With ``M_0 = 0``: ``M_t = f_t M_{t-1} + v_t k_t^T`` and ``r_t = M_t q_t``.
    Shapes: ``f`` (B, L), ``v`` (B, L, E), ``k`` and ``q`` (B, L, D); returns
    ``r`` (B, L, E). One tape node; its backward runs the recurrence in
    reverse time.
    """
    f, v, k, q = (as_tensor(a) for a in (f, v, k, q))
    B, L = f.shape
    if v.shape[:2] != (B, L) or k.shape[:2] != (B, L) or q.shape != k.shape:
        raise DimensionError(f"memory_scan: {f.shape} {v.shape} {k.shape} {q.shape}")
    E, D = v.shape[2], k.shape[2]
    fd, vd, kd, qd = f.data, v.data, k.data, q.data
    vt = np.ascontiguousarray(np.swapaxes(vd, 0, 1))  # (L, B, E)
    kt = np.ascontiguousarray(np.swapaxes(kd, 0, 1))
    qt = np.ascontiguousarray(np.swapaxes(qd, 0, 1))
    writes = vt[..., :, None] * kt[..., None, :]
    mems = np.empty((L + 1, B, E, D))
    mems[0] = 0.0
    for t in range(L):
        np.multiply(mems[t], fd[:, t, None, None], out=mems[t + 1])
        mems[t + 1] += writes[t]
    r = np.swapaxes((mems[1:] @ qt[..., None])[..., 0], 0, 1)

    def back(g):
        gt = np.ascontiguousarray(np.swapaxes(g, 0, 1))  # (L, B, E)
        reads = gt[..., :, None] * qt[..., None, :]
        # gms[t] = dLoss/dM_t, fed by reads at times >= t
        gms = np.empty((L, B, E, D))
        acc = np.zeros((B, E, D))
        for t in range(L - 1, -1, -1):
            acc += reads[t]
            gms[t] = acc
            acc = acc * fd[:, t, None, None]
        gq = (np.swapaxes(mems[1:], -1, -2) @ gt[..., None])[..., 0]
        gv = (gms @ kt[..., None])[..., 0]
        gk = (np.swapaxes(gms, -1, -2) @ vt[..., None])[..., 0]
        gf = (gms * mems[:-1]).sum(axis=(2, 3)).T
        return gf, np.swapaxes(gv, 0, 1), np.swapaxes(gk, 0, 1), np.swapaxes(gq, 0, 1)

    return _make(r, (f, v, k, q), back, "memory_scan")


# ---- gradient checking -----------------------------------------------------

def grad_check(f, x, tol=1e-4, h=1e-5, floor=1e-6):
    """Compare the taped gradient of scalar ``f(x)`` with central differences.

    The relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(x0.copy(), requires_grad=True)
    with Tape() as tape:
        loss = f(leaf)
    grads = tape.backward(loss)
    analytic = grads.get(leaf, np.zeros_like(x0))
    numeric = np.zeros_like(x0)
    flat = x0.reshape(-1)
    for i in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += h
        minus[i] -= h
        fp = float(f(Tensor(plus.reshape(x0.shape))).data)
        fm = float(f(Tensor(minus.reshape(x0.shape))).data)
        numeric.reshape(-1)[i] = (fp - fm) / (2 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = np.abs(analytic - numeric) / denom
    worst = float(rel.max()) if rel.size else 0.0
    return GradReport(worst <= tol, worst, analytic, numeric, tol)
