import csv
import itertools
import math

import numpy as np
import pytest

from transcoder import autodiff as ad
from transcoder import training as tr
from transcoder.channel import make_rng
from transcoder.codes import load_code
from transcoder.nn import ModelConfig, TransCoderModel

SMALL = ModelConfig(m=3, d_model=8, d_khead=8, enc_layers=1, dec_layers=1, modules=["decoder", "refiner"])


def small_cfg(**kw):
    base = dict(epochs=6, batch_size=32, lr=3e-3, runs=2, iters_per_run=3, val_frames=64, seed=11)
    base.update(kw)
    return tr.TrainConfig(**base)


def test_loss_tc_closed_forms():
    c = np.array([[0, 1, 1, 0, 1]])
    assert tr.loss_tc(np.full((1, 5), 0.5), c).item() == pytest.approx(5 * math.log(2))
    assert tr.loss_tc(c.astype(float), c).item() < 1e-7
    # never negative, and larger away from the target
    p = np.random.default_rng(0).uniform(size=(20, 5))
    assert tr.loss_tc(p, np.ones((20, 5))).item() > 0


def test_loss_cd_closed_forms():
    c = np.array([[1, 0, 1]])
    assert tr.loss_cd(np.zeros((1, 3)), c).item() == pytest.approx(3 * math.log(2))
    x = np.array([[-20.0, 20.0, -20.0]])
    assert tr.loss_cd(x, c).item() == pytest.approx(3 * math.log1p(math.exp(-20)))


def test_alphabet_examples():
    assert tr.build_soft_parity_alphabet(load_code("hamming_7_4").H).tolist() == [0, 2, 4]
    assert tr.build_soft_parity_alphabet(np.array([[1, 1, 1, 0, 0]])).tolist() == [0, 2]
    assert tr.build_soft_parity_alphabet(load_code("ldpc_49_24").H).tolist() == [0, 2, 4, 6]


def test_alphabet_covers_codeword_parities():
    code = load_code("ldpc_49_24")
    alpha = set(tr.build_soft_parity_alphabet(code.H).tolist())
    c = code.encode(np.random.default_rng(0).integers(0, 2, (200, 24), dtype=np.uint8))
    assert set((c.astype(int) @ code.H.bits.T.astype(int)).ravel().tolist()) <= alpha


def test_project_estimate_orientation():
    xbar = tr.project_estimate(np.array([50.0, -50.0, 0.0])).data
    assert xbar.tolist() == [0.0, 1.0, 0.5]


def test_loss_h_minimum_at_codeword_hamming():
    code = load_code("hamming_7_4")
    alpha = tr.build_soft_parity_alphabet(code.H)
    words = np.array(list(itertools.product([0, 1], repeat=7)), dtype=np.uint8)
    llr = 50.0 * (1 - 2.0 * words)  # saturated estimates projecting exactly onto each word
    for c in code.encode(np.array(list(itertools.product([0, 1], repeat=4)), dtype=np.uint8)):
        losses = np.array([tr.loss_h(l[None], c[None], code.H, alpha).item() for l in llr])
        own = losses[np.all(words == c, axis=1)][0]
        assert own <= losses.min() + 1e-12
        near = (words != c).sum(axis=1) == 1
        assert (losses[near] > own + 1e-6).all()


def test_loss_h_rejects_non_codeword_parity():
    H = np.array([[1, 1, 1]])
    with pytest.raises(tr.TrainingError):
        tr.loss_h(np.zeros((1, 3)), np.array([[1, 0, 0]]), H, np.array([0.0, 2.0]))


def test_loss_bp_is_half_sum():
    code = load_code("hamming_7_4")
    alpha = tr.build_soft_parity_alphabet(code.H)
    rng = np.random.default_rng(2)
    x = rng.normal(0, 3, (5, 7))
    c = code.encode(rng.integers(0, 2, (5, 4), dtype=np.uint8))
    want = 0.5 * (tr.loss_cd(x, c).item() + tr.loss_h(x, c, code.H, alpha).item())
    assert tr.loss_bp(x, c, code.H, alpha).item() == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("kind", ["tc", "cd", "h"])
def test_loss_gradients(kind):
    code = load_code("hamming_7_4")
    alpha = tr.build_soft_parity_alphabet(code.H)
    rng = np.random.default_rng(3)
    c = code.encode(rng.integers(0, 2, (4, 4), dtype=np.uint8))
    if kind == "tc":
        x = ad.parameter(rng.uniform(0.1, 0.9, (4, 7)))
        fn = lambda: tr.loss_tc(x, c)  # noqa: E731
    elif kind == "cd":
        x = ad.parameter(rng.normal(0, 2, (4, 7)))
        fn = lambda: tr.loss_cd(x, c)  # noqa: E731
    else:
        x = ad.parameter(rng.normal(0, 2, (4, 7)))
        fn = lambda: tr.loss_h(x, c, code.H, alpha)  # noqa: E731
    for analytic, numeric in ad.gradcheck(fn, [x]):
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


def test_single_run_leaves_refiner_without_gradient():
    code = load_code("hamming_7_4")
    model = TransCoderModel(7, SMALL, seed=0)
    cfg = small_cfg(runs=1)
    b, ebn0, noise = tr._batch(code, make_rng(0), 16, cfg.snr_range_db)
    losses = tr.pipeline_losses(model, code, b, ebn0, noise, cfg, tr.build_soft_parity_alphabet(code.H))
    losses[0].backward()
    assert all(p.grad is None or not p.grad.any() for _, p in model.refiner.params())
    assert any(p.grad is not None and p.grad.any() for _, p in model.decoder.params())


def test_end_to_end_pipeline_gradient():
    code = load_code("hamming_7_4")
    model = TransCoderModel(7, SMALL, seed=1)
    cfg = small_cfg(runs=2, iters_per_run=2)
    alpha = tr.build_soft_parity_alphabet(code.H)
    b, ebn0, noise = tr._batch(code, make_rng(1), 4, cfg.snr_range_db)

    def f():
        losses = tr.pipeline_losses(model, code, b, ebn0, noise, cfg, alpha)
        return (losses[0] + losses[1]) * 0.5

    params = [p for _, p in model.params()]
    for analytic, numeric in ad.gradcheck(f, params, max_entries=6, rng=np.random.default_rng(0)):
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)


def test_config_validation():
    with pytest.raises(tr.TrainingError):
        tr.TrainConfig(epochs=0)
    with pytest.raises(tr.TrainingError):
        tr.TrainConfig(loss="mse")
    with pytest.raises(tr.TrainingError):
        tr.TrainConfig(snr_range_db=(5, 2))


def test_runs_need_refiner():
    code = load_code("hamming_7_4")
    model = TransCoderModel(7, ModelConfig(m=3, d_model=8, d_khead=8, dec_layers=1, modules=["decoder"]))
    with pytest.raises(tr.TrainingError):
        tr.train(model, code, small_cfg(runs=2))


def test_short_training_reduces_loss_and_trace(tmp_path):
    code = load_code("hamming_7_4")
    model = TransCoderModel(7, SMALL, seed=2)
    res = tr.train(model, code, small_cfg(epochs=40, batch_size=64, lr=5e-3))
    assert res.final_val_loss < res.initial_val_loss
    for row in res.trace:
        assert len(row.run_losses) == 2
        assert row.loss == pytest.approx(np.mean(row.run_losses), rel=1e-12)
    path = tmp_path / "trace.csv"
    tr.write_trace(res.trace, path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 40
    assert float(rows[-1]["mean_loss"]) == pytest.approx(
        (float(rows[-1]["run_1"]) + float(rows[-1]["run_2"])) / 2, rel=1e-12)


def test_training_bit_reproducible():
    code = load_code("hamming_7_4")
    outs = []
    for _ in range(2):
        model = TransCoderModel(7, SMALL, seed=3)
        tr.train(model, code, small_cfg())
        outs.append(b"".join(p.data.tobytes() for _, p in model.params()))
    assert outs[0] == outs[1]


def test_sc_training_path_runs():
    code = load_code("polar_16_8")
    model = TransCoderModel(16, ModelConfig(m=4, d_model=8, d_khead=8, dec_layers=1, modules=["decoder"]), seed=0)
    res = tr.train(model, code, small_cfg(epochs=2, runs=1, loss="cd", decoder="sc"))
    assert np.isfinite(res.final_val_loss)


def test_sc_decoder_needs_polar_code():
    model = TransCoderModel(7, SMALL)
    with pytest.raises(tr.TrainingError):
        tr.train(model, load_code("hamming_7_4"), small_cfg(decoder="sc", loss="cd"))


# ------------------------------------------------------------------ checkpoints


def test_checkpoint_byte_identical(tmp_path):
    code = load_code("hamming_7_4")
    cfg = ModelConfig(m=3, d_model=8, d_khead=8, enc_layers=1, dec_layers=1, modules=["encoder", "decoder"])
    model = TransCoderModel(7, cfg, seed=4)
    model.calibrate(code, [0.5, 0.8], frames=500)
    tr.save_checkpoint(model, tmp_path / "a")
    again = tr.load_checkpoint(tmp_path / "a")
    tr.save_checkpoint(again, tmp_path / "b")
    for name in ("params.bin", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_reload_evaluates_identically(tmp_path):
    code = load_code("hamming_7_4")
    model = TransCoderModel(7, SMALL, seed=5)
    tr.train(model, code, small_cfg(epochs=2))
    cfg = small_cfg(precision="float32")
    with ad.precision("float32"):
        before = tr.validation_loss(model, code, cfg, tr.build_soft_parity_alphabet(code.H))
    tr.save_checkpoint(model, tmp_path / "ck")
    back = tr.load_checkpoint(tmp_path / "ck", TransCoderModel(7, SMALL, seed=99))
    with ad.precision("float32"):
        after = tr.validation_loss(back, code, cfg, tr.build_soft_parity_alphabet(code.H))
    assert before == after


def test_checkpoint_wrong_d_model(tmp_path):
    tr.save_checkpoint(TransCoderModel(7, SMALL), tmp_path / "ck")
    other = ModelConfig(m=3, d_model=16, d_khead=8, enc_layers=1, dec_layers=1, modules=["decoder", "refiner"])
    with pytest.raises(ad.CheckpointError) as e:
        tr.load_checkpoint(tmp_path / "ck", TransCoderModel(7, other))
    assert "d_model" in str(e.value)
