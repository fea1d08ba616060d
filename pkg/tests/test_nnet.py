import math

import numpy as np
import pytest

from gradcheck import fd_check, images
from oracles import forward_loops, mse_loss
from tunnelnav import nnet
from tunnelnav.errors import CorruptFile, DatasetTooSmall, ShapeMismatch, VersionMismatch

SHAPE = nnet.INPUT_SHAPE


def test_parameter_count():
    m = nnet.init_model(0)
    assert m.n_params == 8 * 3 * 9 + 8 + 16 * 8 * 9 + 16 + 4800 * 64 + 64 + 64 + 1 == 308_721
    assert {k: v.shape for k, v in m.params.items()} == nnet.PARAM_SHAPES


def test_init_bounds_and_zero_biases():
    m = nnet.init_model(3)
    for k, v in m.params.items():
        if k.endswith("_b"):
            assert not v.any()
        else:
            assert np.abs(v).max() <= math.sqrt(1 / nnet.FAN_IN[k])
    assert all(np.isfinite(v).all() for v in m.params.values())
    assert not m.trained


def test_zero_model_zero_output():
    assert nnet.forward(nnet.zero_model(), np.zeros(SHAPE, np.float32))[0] == 0.0


def test_forward_matches_loop_oracle():
    m = nnet.init_model(0).astype(np.float64)
    x = images(1, seed=1)[0]
    assert abs(nnet.forward(m, x)[0] - forward_loops(m.params, x)) < 1e-6


def test_forward_float32_close_to_oracle():
    m = nnet.init_model(0)
    x = images(1, seed=2)[0]
    assert abs(nnet.forward(m, x)[0] - forward_loops(m.params, x)) < 1e-5


def test_batch_equals_single_calls():
    m = nnet.init_model(1).astype(np.float64)
    x = images(5, seed=3)
    batch = nnet.forward(m, x)
    singles = np.array([nnet.forward(m, xi)[0] for xi in x])
    assert np.allclose(batch, singles, rtol=0, atol=1e-12)


def test_shape_mismatch():
    m = nnet.init_model(0)
    with pytest.raises(ShapeMismatch):
        nnet.forward(m, np.zeros((3, 60, 80)))
    with pytest.raises(ShapeMismatch):
        nnet.backward(m, np.zeros((0, *SHAPE)), np.zeros(0))
    with pytest.raises(ShapeMismatch):
        nnet.backward(m, np.zeros((2, *SHAPE)), np.zeros(3))


def test_predict_clamps_and_scales():
    m = nnet.zero_model()
    m.params["fc2_b"][:] = 3.0
    assert math.isclose(nnet.predict(m, np.zeros(SHAPE, np.float32)), 1.5 * math.radians(40), rel_tol=1e-6)
    m.params["fc2_b"][:] = 0.5
    assert math.isclose(nnet.predict(m, np.zeros(SHAPE, np.float32)), 0.5 * math.radians(40), rel_tol=1e-6)


def test_no_nan_on_fuzzed_inputs():
    rng = np.random.default_rng(9)
    x = rng.uniform(size=(1000, *SHAPE)).astype(np.float32)
    for m in (nnet.init_model(0), nnet.init_model(7)):
        assert np.isfinite(nnet.predict(m, x)).all()


# gradients


def test_perfect_prediction_has_zero_loss_and_gradient():
    m = nnet.init_model(0).astype(np.float64)
    x = images(3, seed=4)
    y = nnet.forward(m, x) * nnet.OUTPUT_SCALE
    g, loss = nnet.backward(m, x, y)
    assert loss == 0.0
    assert all(not v.any() for v in g.values())


def test_duplicated_batch_same_loss_and_gradient():
    m = nnet.init_model(0).astype(np.float64)
    x = images(2, seed=5)
    y = np.array([0.1, -0.3])
    g1, l1 = nnet.backward(m, x, y)
    g2, l2 = nnet.backward(m, np.concatenate([x, x]), np.concatenate([y, y]))
    assert math.isclose(l1, l2, rel_tol=1e-12)
    for k in g1:
        assert np.allclose(g1[k], g2[k], rtol=1e-10, atol=1e-15)


def test_loss_matches_oracle():
    m = nnet.init_model(2).astype(np.float64)
    x = images(2, seed=6)
    y = np.array([0.2, -0.1])
    _, loss = nnet.backward(m, x, y)
    assert math.isclose(loss, mse_loss(m.params, x, y, nnet.OUTPUT_SCALE), rel_tol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(seed):
    worst, checked = fd_check(seed)
    assert checked >= 60
    assert worst < 1e-3


def test_gradient_small_step_every_conv_parameter():
    m = nnet.init_model(11).astype(np.float64)
    x = images(2, seed=12, density=0.08).astype(np.float64)
    y = np.array([0.3, -0.2])
    g, _ = nnet.backward(m, x, y)
    h = 1e-6
    for k in ("conv1_w", "conv1_b", "conv2_b"):
        flat = m.params[k].reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp = mse_loss(m.params, x, y, nnet.OUTPUT_SCALE)
            flat[i] = old - h
            lm = mse_loss(m.params, x, y, nnet.OUTPUT_SCALE)
            flat[i] = old
            fd, an = (lp - lm) / (2 * h), g[k].reshape(-1)[i]
            assert abs(fd - an) <= 1e-3 * max(abs(fd), abs(an)) + 1e-9


# optimiser


def test_rmsprop_zero_gradient():
    m = nnet.init_model(0)
    before = m.copy()
    st = nnet.init_optimizer(m)
    for v in st.acc.values():
        v[:] = 1.0
    nnet.rmsprop_step(m, {k: np.zeros_like(v) for k, v in m.params.items()}, st, 0.01)
    for k in m.params:
        assert np.array_equal(m.params[k], before.params[k])
        assert np.allclose(st.acc[k], 0.99)


def test_rmsprop_hand_value():
    m = nnet.NetModel({"p": np.array([1.0])})
    st = nnet.OptimizerState({"p": np.array([0.0])})
    nnet.rmsprop_step(m, {"p": np.array([2.0])}, st, 0.01)
    assert math.isclose(st.acc["p"][0], 0.04)
    assert math.isclose(m.params["p"][0], 1 - 0.01 * 2 / (0.2 + 1e-8), rel_tol=1e-12)
    assert abs(m.params["p"][0] - 0.9) < 1e-4


def test_rmsprop_converges_on_quadratic():
    m = nnet.NetModel({"p": np.array([0.0])})
    st = nnet.OptimizerState({"p": np.array([0.0])})
    for _ in range(200):
        nnet.rmsprop_step(m, {"p": 2 * (m.params["p"] - 3.0)}, st, 0.05)
    assert abs(m.params["p"][0] - 3.0) < 0.05


def test_rmsprop_accumulator_non_negative():
    m = nnet.init_model(0)
    st = nnet.init_optimizer(m)
    rng = np.random.default_rng(0)
    for _ in range(3):
        nnet.rmsprop_step(m, {k: rng.normal(size=v.shape).astype(v.dtype) for k, v in m.params.items()}, st)
    assert all((a >= 0).all() for a in st.acc.values())


# training


def test_train_requires_enough_samples():
    with pytest.raises(DatasetTooSmall):
        nnet.train(images(10), np.zeros(10), epochs=1)


def test_split_is_ninety_ten():
    tr, va = nnet.split_indices(1000, 0)
    assert len(tr) == 900 and len(va) == 100
    assert not set(tr) & set(va)


@pytest.fixture(scope="module")
def overfit():
    x = images(20, seed=20, density=0.1)
    y = np.random.default_rng(21).uniform(-0.6, 0.6, 20).astype(np.float32)
    return x, y, nnet.train(x, y, epochs=500, batch_size=20, lr=1e-4, seed=0, min_samples=1)


def test_overfit_small_set(overfit):
    _, _, res = overfit
    assert res.history[-1].train_loss < 1e-3
    assert res.model.trained
    assert 1 <= res.best_epoch <= 500


def test_training_loss_nearly_monotone_at_small_lr():
    x = images(20, seed=20, density=0.1)
    y = np.random.default_rng(21).uniform(-0.6, 0.6, 20).astype(np.float32)
    res = nnet.train(x, y, epochs=60, batch_size=20, lr=1e-4, seed=0, min_samples=1)
    losses = [r.train_loss for r in res.history]
    assert all(b <= a * 1.05 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_training_is_bit_reproducible():
    x = images(40, seed=30)
    y = np.random.default_rng(31).uniform(-0.6, 0.6, 40).astype(np.float32)
    a = nnet.train(x, y, epochs=3, batch_size=8, seed=5, min_samples=1, augment=True)
    b = nnet.train(x, y, epochs=3, batch_size=8, seed=5, min_samples=1, augment=True)
    assert a.history == b.history
    for k in a.model.params:
        assert np.array_equal(a.model.params[k], b.model.params[k])


def test_training_log(tmp_path, overfit):
    _, _, res = overfit
    p = tmp_path / "log.csv"
    nnet.write_log(res.history[:3], p)
    lines = p.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_mae_deg" and len(lines) == 4


def test_mirror_is_an_involution():
    x = images(3, seed=40)
    y = np.array([0.1, -0.2, 0.3])
    x2, y2 = nnet.mirror(*nnet.mirror(x, y))
    assert np.allclose(x2, x, atol=1e-7) and np.array_equal(y2, y)


def test_shift_moves_depth_only():
    x = images(2, seed=41)
    out = nnet.shift(x, [2, -1], [-3, 0])
    assert np.array_equal(out[0, 0, 2:, :57], x[0, 0, :78, 3:])
    assert not out[0, 0, :2].any() and not out[0, 0, :, 57:].any()
    assert np.array_equal(out[1, 0, :79], x[1, 0, 1:])
    assert np.array_equal(out[:, 1:], x[:, 1:])


def test_shift_zero_is_identity():
    x = images(2, seed=42)
    assert np.array_equal(nnet.shift(x, [0, 0], [0, 0]), x)


# model files


def test_save_load_round_trip(tmp_path):
    m = nnet.init_model(4)
    m.trained = True
    p = tmp_path / "m.bin"
    nnet.save_model(m, p)
    back = nnet.load_model(p)
    assert back.trained and back.version == nnet.MODEL_VERSION
    for k in m.params:
        assert np.array_equal(back.params[k], m.params[k])


def test_truncated_file(tmp_path):
    p = tmp_path / "m.bin"
    nnet.save_model(nnet.init_model(0), p)
    p.write_bytes(p.read_bytes()[:-10])
    with pytest.raises(CorruptFile):
        nnet.load_model(p)
    p.write_bytes(p.read_bytes()[:20])
    with pytest.raises(CorruptFile):
        nnet.load_model(p)


def test_flipped_payload_bit(tmp_path):
    p = tmp_path / "m.bin"
    nnet.save_model(nnet.init_model(0), p)
    data = bytearray(p.read_bytes())
    data[-5] ^= 0x01
    p.write_bytes(bytes(data))
    with pytest.raises(CorruptFile):
        nnet.load_model(p)


def test_bad_magic(tmp_path):
    p = tmp_path / "m.bin"
    p.write_bytes(b"NOTAMODEL" * 10)
    with pytest.raises(CorruptFile):
        nnet.load_model(p)


def test_wrong_version(tmp_path):
    p = tmp_path / "m.bin"
    m = nnet.init_model(0)
    m.version = nnet.MODEL_VERSION + 1
    nnet.save_model(m, p)
    with pytest.raises(VersionMismatch):
        nnet.load_model(p)
