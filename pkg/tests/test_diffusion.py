import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segdiff import diffusion
from segdiff.numkit import ConfigurationError, ContractError


@pytest.mark.parametrize("kind", ["cosine", "linear"])
def test_schedule_monotone(kind):
    s = diffusion.build_schedule(1000, kind)
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert 0 < s.alpha_bar[-1] < s.alpha_bar[0] < 1
    np.testing.assert_allclose(s.alpha_bar, np.cumprod(1 - s.gamma))
    assert s.abar(0) == 1.0


def test_schedule_guards():
    with pytest.raises(ConfigurationError):
        diffusion.build_schedule(0)
    with pytest.raises(ConfigurationError):
        diffusion.build_schedule(gamma=[0.1, 1.0])
    with pytest.raises(ConfigurationError):
        diffusion.build_schedule(10, "quadratic")


def test_single_step_schedule():
    s = diffusion.build_schedule(gamma=[0.5])
    y0 = np.array([1.0, -1.0])
    yt = diffusion.forward_noise(y0, 1, np.array([0.3, 0.2]), s)
    np.testing.assert_allclose(diffusion.ddim_step(yt, 1, y0, s), y0)


def test_forward_noise_variance():
    s = diffusion.build_schedule(1000)
    rng = np.random.default_rng(0)
    for t in (1, 250, 900):
        draws = diffusion.forward_noise(np.full(10 ** 4, 0.7), t, rng.standard_normal(10 ** 4), s)
        a = s.abar(t)
        assert abs(draws.mean() - math.sqrt(a) * 0.7) < 4 * math.sqrt((1 - a) / 10 ** 4) + 1e-12
        assert abs(draws.var() - (1 - a)) < 0.05 * (1 - a) + 1e-12


def test_ddim_step_closed_form():
    s = diffusion.build_schedule(50, "linear")
    rng = np.random.default_rng(1)
    y0, eps = rng.normal(size=(2, 6))
    t, tp = 30, 12
    yt = diffusion.forward_noise(y0, t, eps, s)
    # with the exact clean signal the update lands on the same noise direction at t_prev
    expected = math.sqrt(s.abar(tp)) * y0 + math.sqrt(1 - s.abar(tp)) * eps
    np.testing.assert_allclose(diffusion.ddim_step(yt, t, y0, s, t_prev=tp), expected, atol=1e-12)


def test_sigma_formula_and_stochastic_step():
    s = diffusion.build_schedule(100, eta=1.0)
    t = 40
    a_t, a_p = s.abar(t), s.abar(t - 1)
    beta_tilde = (1 - a_p) / (1 - a_t) * (1 - a_t / a_p)
    assert abs(s.sigma(t) ** 2 - beta_tilde) < 1e-14
    with pytest.raises(ContractError):
        diffusion.ddim_step(np.zeros(3), t, np.zeros(3), s)


def test_sampling_timesteps():
    ts = diffusion.sampling_timesteps(1000, 25)
    assert len(ts) == 25 and ts[0] == 1000 and ts[-1] == 1
    assert all(a > b for a, b in zip(ts, ts[1:]))
    assert diffusion.sampling_timesteps(10, 10) == list(range(10, 0, -1))
    with pytest.raises(ConfigurationError):
        diffusion.sampling_timesteps(10, 11)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["cosine", "linear"]), st.integers(1, 50))
def test_oracle_denoiser_recovers_clean_signal(seed, kind, steps):
    s = diffusion.build_schedule(1000, kind)
    y0 = np.where(np.random.default_rng(seed).random((16, 3)) > 0.5, 1.0, -1.0)
    traj = diffusion.sample(lambda y, t, c: y0, None, s, steps, seed, y0.shape)
    assert len(traj) == steps + 1
    assert np.max(np.abs(traj[-1] - y0)) <= 1e-5


def test_sampling_is_deterministic_for_fixed_seed():
    s = diffusion.build_schedule(100, eta=0.5)
    den = lambda y, t, c: np.tanh(y)
    a = diffusion.sample(den, None, s, 10, 3, (4, 2))[-1]
    b = diffusion.sample(den, None, s, 10, 3, (4, 2))[-1]
    np.testing.assert_array_equal(a, b)


def test_label_signal_round_trip():
    y = np.array([[0, 1], [1, 0]])
    s = diffusion.labels_to_signal(y)
    np.testing.assert_array_equal(s, [[-1, 1], [1, -1]])
    np.testing.assert_array_equal(diffusion.signal_to_probs(s), y)
    np.testing.assert_array_equal(diffusion.signal_to_probs(np.array([3.0, -4.0])), [1.0, 0.0])
