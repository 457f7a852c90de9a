"""Temporal DFT and the frequency-domain decoder conditions.

Spectra are stored as real arrays: for an (L, D) input the output is (L, 2D)
with all real parts first and all imaginary parts after, so bin ``k`` of
channel ``c`` is ``out[k, c] + 1j * out[k, D + c]``. The forward transform is
unnormalized; the inverse carries the ``1/L``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import numkit as nk


@lru_cache(maxsize=32)
def _dft_matrices(L):
    k = np.arange(L)
    # reduce k*t mod L before scaling so large L keeps full phase accuracy
    phase = 2.0 * np.pi * (np.outer(k, k) % L) / L
    cos, sin = np.cos(phase), np.sin(phase)
    cos.setflags(write=False)
    sin.setflags(write=False)
    return cos, sin


def dft_time(x):
    """Unnormalized DFT along the time axis (axis -2).

    Accepts an (L, D) or (B, L, D) array or :class:`~segdiff.numkit.Tensor`.
    Tensors stay on the tape so gradients flow through (the adjoint transform).
    """
    if isinstance(x, nk.Tensor):
        L = x.shape[-2]
        cos, sin = _dft_matrices(L)
        sub = "kt,btd->bkd" if x.ndim == 3 else "kt,td->kd"
        re = nk.einsum(sub, nk.constant(cos), x)
        im = nk.einsum(sub, nk.constant(-sin), x)
        return nk.concat([re, im], axis=-1)
    x = np.asarray(x, dtype=np.float64)
    L = x.shape[-2]
    if L == 0:
        return np.zeros(x.shape[:-1] + (2 * x.shape[-1],))
    cos, sin = _dft_matrices(L)
    re = np.einsum("kt,...td->...kd", cos, x)
    im = np.einsum("kt,...td->...kd", -sin, x)
    return np.concatenate([re, im], axis=-1)


def idft_time(f):
    """Inverse of :func:`dft_time`; returns the real part of the inverse transform."""
    f = np.asarray(f, dtype=np.float64)
    L, width = f.shape[-2], f.shape[-1]
    if width % 2:
        raise nk.DimensionError(f"spectrum width must be even, got {width}")
    D = width // 2
    if L == 0:
        return np.zeros(f.shape[:-1] + (D,))
    re, im = f[..., :D], f[..., D:]
    cos, sin = _dft_matrices(L)
    # x_t = (1/L) sum_k (re_k + i im_k)(cos + i sin)  -> real part
    out = np.einsum("tk,...kd->...td", cos, re) - np.einsum("tk,...kd->...td", sin, im)
    return out / L


def to_complex(f):
    f = np.asarray(f)
    D = f.shape[-1] // 2
    return f[..., :D] + 1j * f[..., D:]


def from_complex(z):
    z = np.asarray(z)
    return np.concatenate([z.real, z.imag], axis=-1)


def fft_radix2(x):
    """Iterative radix-2 Cooley-Tukey FFT along axis 0 of a complex or real array.

    Length must be a power of two. Matches the direct O(L^2) transform.
    """
    a = np.array(x, dtype=np.complex128)
    n = a.shape[0]
    if n == 0 or n & (n - 1):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")
    bits = n.bit_length() - 1
    rev = np.array([int(format(i, f"0{bits}b")[::-1], 2) if bits else 0 for i in range(n)])
    a = a[rev]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        tw = tw.reshape((half,) + (1,) * (a.ndim - 1))
        a = a.reshape((n // size, size) + a.shape[1:])
        even = a[:, :half].copy()
        odd = a[:, half:] * tw
        a[:, :half] = even + odd
        a[:, half:] = even - odd
        a = a.reshape((n,) + a.shape[2:])
        size *= 2
    return a


def dft_time_fast(x):
    """Same output layout as :func:`dft_time`, via the radix-2 path (numpy only)."""
    x = np.asarray(x, dtype=np.float64)
    return from_complex(fft_radix2(x))


@dataclass
class ConditionBundle:
    temporal: object
    frequency: object
    raw: object

    @property
    def length(self):
        return self.raw.shape[-2]

    def concat(self, include_frequency=True, frequency_scale=1.0):
        """Channel-concatenate in the order temporal, frequency, raw."""
        parts = [self.temporal]
        if include_frequency:
            freq = self.frequency
            if frequency_scale != 1.0:
                freq = nk.mul(freq, frequency_scale) if isinstance(freq, nk.Tensor) else freq * frequency_scale
            parts.append(freq)
        parts.append(self.raw)
        if any(isinstance(p, nk.Tensor) for p in parts):
            return nk.concat(parts, axis=-1)
        return np.concatenate(parts, axis=-1)


def make_conditions(z, z_hat):
    """Build the decoder condition bundle from encoder output ``z`` and the
    recurrent layer output ``z_hat``."""
    if z.shape[-2] != z_hat.shape[-2]:
        raise nk.ContractError(f"length mismatch: {z.shape[-2]} vs {z_hat.shape[-2]}")
    return ConditionBundle(temporal=z_hat, frequency=dft_time(z_hat), raw=z)
