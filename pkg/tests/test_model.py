import math
from dataclasses import replace

import numpy as np
import pytest

import gradcases
from gradcases import C, D_IN, L, tiny_config
from segdiff import numkit as nk
from segdiff.netseg import checkpoint, losses
from segdiff.netseg.model import SegDiffModel, binarize, merge_branches, timestep_embedding
from segdiff.netseg.training import Adam, batch_loss, fit, predict, step_rng, train_step
from segdiff.synthdata import FormatError


@pytest.mark.parametrize("seed", [0, 1])
def test_module_gradients(seed):
    for label, f, x in gradcases.cases(seed):
        rep = nk.grad_check(f, x, tol=gradcases.TOL)
        assert rep.passed, (label, rep.max_rel_error)


def loss_oracle(pred, gt):
    """BCE plus smoothed-boundary MSE, written as plain loops."""
    Lf, Cf = gt.shape
    bce = 0.0
    for t in range(Lf):
        for c in range(Cf):
            p = min(max(pred[t, c], 1e-6), 1 - 1e-6)
            bce -= gt[t, c] * math.log(p) + (1 - gt[t, c]) * math.log(1 - p)
    bce /= Lf * Cf

    def bsig(y):
        b = [max(abs(y[t + 1, c] - y[t, c]) for c in range(Cf)) for t in range(Lf - 1)]
        n = len(b)
        return [0.25 * (b[t - 1] if t > 0 else 0) + 0.5 * b[t] + 0.25 * (b[t + 1] if t + 1 < n else 0)
                for t in range(n)]

    bp, bg = bsig(pred), bsig(gt)
    mse = sum((a - b) ** 2 for a, b in zip(bp, bg)) / len(bp)
    return bce + mse


def test_loss_matches_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(10):
        gt = (rng.random((9, 3)) > 0.5).astype(float)
        pred = rng.random((9, 3))
        val = float(losses.segmentation_loss(nk.Tensor(pred), gt).data)
        assert val == pytest.approx(loss_oracle(pred, gt), rel=1e-12)


def test_loss_batched_equals_mean_of_samples():
    rng = np.random.default_rng(1)
    gt = (rng.random((2, 6, 2)) > 0.5).astype(float)
    pred = rng.random((2, 6, 2))
    both = float(losses.segmentation_loss(nk.Tensor(pred), gt).data)
    each = [float(losses.segmentation_loss(nk.Tensor(pred[i]), gt[i]).data) for i in range(2)]
    assert both == pytest.approx(np.mean(each), rel=1e-12)


def test_loss_rejects_soft_labels():
    with pytest.raises(nk.ContractError):
        losses.segmentation_loss(nk.Tensor(np.full((3, 2), 0.5)), np.full((3, 2), 0.5))


def test_perfect_prediction_has_near_zero_loss():
    gt = np.array([[0, 1], [0, 1], [1, 0]], dtype=float)
    assert float(losses.segmentation_loss(nk.Tensor(gt), gt).data) < 1e-5


def toy_batch(seed, B=2):
    rng = np.random.default_rng(seed)
    xh, xp = rng.normal(size=(2, B, L, D_IN))
    y = (rng.random((B, L, C)) > 0.5).astype(float)
    return xh, xp, y


def param_grads(cfg):
    model = SegDiffModel(cfg, D_IN, C)
    xh, xp, y = toy_batch(0)
    with nk.Tape() as tape:
        loss, _ = batch_loss(model, xh, xp, y, np.random.default_rng(0))
    grads = tape.backward(loss)
    return model, {n: grads.get(p) for n, p in model.params.items()}


@pytest.mark.parametrize("flag", ["no_partial", "no_hpxlstm", "no_bca"])
def test_ablation_disconnects_exactly_its_parameters(flag):
    full_model, full = param_grads(tiny_config())
    assert all(g is not None and np.any(g != 0) for g in full.values())
    model, grads = param_grads(tiny_config(**{flag: True}))
    cut = set(model.parameter_groups()[flag])
    assert cut
    for name, g in grads.items():
        if name in cut:
            assert g is None or not np.any(g), name
        else:
            assert g is not None and np.any(g != 0), name


def test_no_dft_cond_drops_frequency_channels():
    full = SegDiffModel(tiny_config(), D_IN, C)
    cut = SegDiffModel(tiny_config(no_dft_cond=True), D_IN, C)
    assert full.cond_dim == 4 * gradcases.D and cut.cond_dim == 2 * gradcases.D
    # parameters shared by name start identical across variants
    for name in ("enc_h.in_w", "xl_p.W_Q", "dec_h.l0.conv_w"):
        assert np.array_equal(full.params[name].data, cut.params[name].data)


def test_branches_independent_without_bca():
    model = SegDiffModel(tiny_config(no_bca=True), D_IN, C)
    xh, xp, _ = toy_batch(2)
    a = model.conditions(xh, xp)
    b = model.conditions(xh, xp + 1.0)
    assert np.array_equal(a["h"].temporal.data, b["h"].temporal.data)
    coupled = SegDiffModel(tiny_config(), D_IN, C)
    a = coupled.conditions(xh, xp)
    b = coupled.conditions(xh, xp + 1.0)
    assert not np.array_equal(a["h"].temporal.data, b["h"].temporal.data)


def test_timestep_embedding():
    e = timestep_embedding([0, 5], 6)
    assert e.shape == (2, 6)
    np.testing.assert_allclose(e[0], [0, 0, 0, 1, 1, 1])


def test_merge_and_binarize():
    m = merge_branches([np.array([0.2, 0.8]), np.array([0.6, 0.4])])
    np.testing.assert_allclose(m, [0.4, 0.6])
    np.testing.assert_array_equal(binarize(np.array([0.5, 0.51])), [0, 1])


def test_decoder_rejects_wrong_shapes():
    model = SegDiffModel(tiny_config(), D_IN, C)
    with pytest.raises(nk.ContractError):
        model.denoise(np.zeros((L, C + 1)), 3, np.zeros((L, model.cond_dim)), "h")
    with pytest.raises(nk.ConfigurationError):
        model.encode(np.zeros((L, D_IN + 1)), "h")


def toy_data(n=6, seed=3):
    rng = np.random.default_rng(seed)
    return [(rng.normal(size=(L, D_IN)), rng.normal(size=(L, D_IN)),
             (rng.random((L, C)) > 0.5).astype(np.uint8)) for _ in range(n)]


def test_training_reduces_loss_and_is_deterministic():
    cfg = tiny_config(epochs=8, batch_size=3, lr=1e-2)
    runs = []
    for _ in range(2):
        model = SegDiffModel(cfg, D_IN, C)
        log = []
        fit(model, toy_data(), on_step=lambda r: log.append(r["loss"]))
        runs.append((log, {n: p.data.copy() for n, p in model.params.items()}))
    assert runs[0][0] == runs[1][0]
    assert all(np.array_equal(runs[0][1][n], runs[1][1][n]) for n in runs[0][1])
    assert np.mean(runs[0][0][-4:]) < np.mean(runs[0][0][:4])


def test_parameters_stay_float32_representable():
    cfg = tiny_config(epochs=1, batch_size=3)
    model = SegDiffModel(cfg, D_IN, C)
    fit(model, toy_data())
    for p in model.params.values():
        assert np.array_equal(p.data, p.data.astype(np.float32).astype(np.float64))


def test_checkpoint_round_trip_and_resume(tmp_path):
    cfg = tiny_config(epochs=2, batch_size=3)
    data = toy_data()
    straight = SegDiffModel(cfg, D_IN, C)
    log_a = []
    fit(straight, data, on_step=lambda r: log_a.append(r["loss"]))

    first = SegDiffModel(replace(cfg, epochs=1), D_IN, C)
    log_b = []
    opt = fit(first, data, on_step=lambda r: log_b.append(r["loss"]))
    path = tmp_path / "m.sdm"
    checkpoint.save_checkpoint(path, first, {"epoch": 1}, opt)
    resumed, header, opt2 = checkpoint.load_checkpoint(path, with_optimizer=True)
    for n, p in first.params.items():
        assert np.array_equal(resumed.params[n].data, p.data)
    resumed.cfg = replace(resumed.cfg, epochs=2)
    fit(resumed, data, opt2, start_epoch=header["train_state"]["epoch"],
        on_step=lambda r: log_b.append(r["loss"]))
    assert log_a == log_b
    for n, p in straight.params.items():
        assert np.array_equal(resumed.params[n].data, p.data)


def test_checkpoint_corruption(tmp_path):
    model = SegDiffModel(tiny_config(), D_IN, C)
    buf = checkpoint.encode_checkpoint(model)
    header, params = checkpoint.decode_checkpoint(buf)
    assert list(params) == list(model.params)
    for bad in (b"XDM1" + buf[4:], buf[:6], buf[:-2], buf + b"\x00", buf[:8] + b"\xff" + buf[9:],
                b"SDM1" + (2).to_bytes(4, "little") + b"[]"):
        with pytest.raises(FormatError):
            checkpoint.decode_checkpoint(bad)


def test_predictions_do_not_depend_on_worker_count(monkeypatch):
    model = SegDiffModel(tiny_config(), D_IN, C)
    data = toy_data(4)
    one = predict(model, data, workers=1)
    monkeypatch.setenv("SEGDIFF_THREADS", "3")
    many = predict(model, data, workers=8)
    assert all(np.array_equal(a, b) for a, b in zip(one, many))


def test_nan_loss_aborts_with_diagnostics():
    model = SegDiffModel(tiny_config(), D_IN, C)
    model.params["enc_h.in_w"].data[:] = np.nan
    xh, xp, y = toy_batch(4)
    from segdiff.netseg.training import TrainingError
    with pytest.raises(TrainingError, match="step 0"):
        train_step(model, Adam(), xh, xp, y, 0)


def test_step_rng_depends_on_step_only():
    assert step_rng(1, 5).random() == step_rng(1, 5).random()
    assert step_rng(1, 5).random() != step_rng(1, 6).random()
