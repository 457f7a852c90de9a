"""Noise schedules, closed-form forward corruption and DDIM reverse steps.

Timesteps are 1-based: ``t`` in ``1..T`` indexes ``alpha_bar[t - 1]`` and
``alpha_bar`` at ``t = 0`` is defined as 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numkit import ConfigurationError, ContractError


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    gamma: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    eta: float = 0.0

    def abar(self, t):
        """Cumulative signal rate at 1-based step ``t`` (``t = 0`` gives 1)."""
        if t == 0:
            return 1.0
        if not 1 <= t <= self.T:
            raise ContractError(f"timestep {t} outside 1..{self.T}")
        return float(self.alpha_bar[t - 1])

    def sigma(self, t, t_prev=None):
        """Reverse-process noise scale for the jump ``t -> t_prev``."""
        if t_prev is None:
            t_prev = t - 1
        if self.eta == 0.0:
            return 0.0
        a_t, a_prev = self.abar(t), self.abar(t_prev)
        return self.eta * math.sqrt((1 - a_prev) / (1 - a_t)) * math.sqrt(1 - a_t / a_prev)

    @property
    def sigmas(self):
        return np.array([self.sigma(t) for t in range(1, self.T + 1)])


def _from_gamma(gamma, eta):
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim != 1 or gamma.size < 1:
        raise ConfigurationError("schedule needs at least one step")
    if np.any(gamma <= 0) or np.any(gamma >= 1):
        raise ConfigurationError("every gamma_t must lie in (0, 1)")
    alpha = 1.0 - gamma
    return NoiseSchedule(len(gamma), gamma, alpha, np.cumprod(alpha), float(eta))


def build_schedule(T=1000, kind="cosine", *, beta_start=1e-4, beta_end=0.02,
                   cosine_s=0.008, max_gamma=0.999, gamma=None, eta=0.0):
    """Construct a :class:`NoiseSchedule`.

    ``kind="linear"`` spaces gamma evenly in ``[beta_start, beta_end]``;
    ``kind="cosine"`` follows the squared-cosine alpha_bar curve. Passing
    ``gamma`` explicitly bypasses both.
    """
    if gamma is not None:
        return _from_gamma(gamma, eta)
    if T < 1:
        raise ConfigurationError(f"T must be >= 1, got {T}")
    if kind == "linear":
        g = np.linspace(beta_start, beta_end, T) if T > 1 else np.array([beta_end])
    elif kind == "cosine":
        steps = np.arange(T + 1) / T
        f = np.cos((steps + cosine_s) / (1 + cosine_s) * math.pi / 2) ** 2
        abar = f / f[0]
        g = np.clip(1.0 - abar[1:] / abar[:-1], 1e-8, max_gamma)
    else:
        raise ConfigurationError(f"unknown schedule kind {kind!r}")
    return _from_gamma(g, eta)


def forward_noise(y0, t, eps, sched):
    """``y_t = sqrt(abar_t) y0 + sqrt(1 - abar_t) eps``."""
    if not 1 <= t <= sched.T:
        raise ContractError(f"timestep {t} outside 1..{sched.T}")
    a = sched.abar(t)
    return math.sqrt(a) * np.asarray(y0) + math.sqrt(1.0 - a) * np.asarray(eps)


def ddim_step(y_t, t, y0_hat, sched, eps=None, t_prev=None):
    """One reverse update from step ``t`` to ``t_prev`` (default ``t - 1``)."""
    if t_prev is None:
        t_prev = t - 1
    if not 1 <= t <= sched.T or not 0 <= t_prev < t:
        raise ContractError(f"bad step {t} -> {t_prev}")
    a_t, a_prev = sched.abar(t), sched.abar(t_prev)
    sigma = sched.sigma(t, t_prev)
    rest = 1.0 - a_prev - sigma ** 2
    if rest < -1e-12:
        raise ScheduleError(f"1 - abar_prev - sigma^2 = {rest} < 0 at t={t}")
    rest = max(rest, 0.0)
    y_t = np.asarray(y_t)
    y0_hat = np.asarray(y0_hat)
    if a_t < 1.0:
        eps_hat = (y_t - math.sqrt(a_t) * y0_hat) / math.sqrt(1.0 - a_t)
    else:
        eps_hat = np.zeros_like(y_t)
    out = math.sqrt(a_prev) * y0_hat + math.sqrt(rest) * eps_hat
    if sigma > 0.0:
        if eps is None:
            raise ContractError("stochastic step (sigma > 0) needs eps")
        out = out + sigma * np.asarray(eps)
    return out


def sampling_timesteps(T, steps):
    """Descending timesteps from ``T`` down to 1, as evenly spaced as integers allow."""
    if steps < 1:
        raise ConfigurationError(f"steps must be >= 1, got {steps}")
    if steps > T:
        raise ConfigurationError(f"steps ({steps}) exceeds T ({T})")
    if steps == 1:
        return [T]
    ts = np.rint(np.linspace(T, 1, steps)).astype(int)
    return [int(t) for t in ts]


def sample(denoiser, conditions, sched, steps, seed, shape):
    """Run the reverse process from seeded noise.

    ``denoiser(y, t, conditions)`` returns the clean estimate. Returns the
    trajectory ``[y_T, ..., y_0]`` (length ``steps + 1``).
    """
    rng = np.random.default_rng(seed)
    ts = sampling_timesteps(sched.T, steps)
    y = rng.standard_normal(shape)
    traj = [y]
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        y0_hat = denoiser(y, t, conditions)
        eps = rng.standard_normal(shape) if sched.eta > 0 else None
        y = ddim_step(y, t, y0_hat, sched, eps=eps, t_prev=t_prev)
        traj.append(y)
    return traj


def labels_to_signal(y, scale=1.0, symmetric=True):
    """Map {0,1} labels (or probabilities) into the diffusion space."""
    y = np.asarray(y, dtype=np.float64)
    return (2.0 * y - 1.0) * scale if symmetric else y * scale


def signal_to_probs(s, scale=1.0, symmetric=True):
    s = np.asarray(s, dtype=np.float64) / scale
    return np.clip((s + 1.0) / 2.0 if symmetric else s, 0.0, 1.0)
