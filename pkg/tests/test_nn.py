import math

import numpy as np
import pytest

from fedpb.errors import CheckpointMismatch, DataUnreadable, EmptyDataset, LengthMismatch, ShapeMismatch
from fedpb.nn.checkpoint import load_checkpoint, save_checkpoint
from fedpb.nn.gradcheck import SMALL_SHAPE, check_gradients, relative_error
from fedpb.nn.model import (
    FULL_SHAPE,
    LstmCellParams,
    ModelShape,
    backward,
    bce_loss,
    bilstm_layer,
    evaluate,
    flatten,
    forward,
    init_params,
    loss_and_grad,
    lstm_cell_step,
    predict_proba,
    unflatten,
)


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_cell(x, h, c, p):
    """The five LSTM equations, one scalar at a time."""
    d_in, d_h = len(x), len(h)

    def pre(g, j):
        return sum(x[i] * p.W[g, i, j] for i in range(d_in)) + sum(h[i] * p.U[g, i, j] for i in range(d_h)) + p.b[g, j]

    h2, c2 = [], []
    for j in range(d_h):
        i_, f_, g_, o_ = sig(pre(0, j)), sig(pre(1, j)), math.tanh(pre(2, j)), sig(pre(3, j))
        c2.append(f_ * c[j] + i_ * g_)
        h2.append(o_ * math.tanh(c2[-1]))
    return np.array(h2), np.array(c2)


def rand_cell(rng, d_in, d_h, scale=0.5):
    return LstmCellParams(
        rng.normal(scale=scale, size=(4, d_in, d_h)),
        rng.normal(scale=scale, size=(4, d_h, d_h)),
        rng.normal(scale=scale, size=(4, d_h)),
    )


def zero_cell(d_in, d_h):
    return LstmCellParams(np.zeros((4, d_in, d_h)), np.zeros((4, d_h, d_h)), np.zeros((4, d_h)))


# --- cell and layer ------------------------------------------------------------


def test_cell_all_zero():
    h, c = lstm_cell_step(np.zeros(3), np.zeros(2), np.zeros(2), zero_cell(3, 2))
    assert not h.any() and not c.any()


def test_cell_forget_saturation():
    p = zero_cell(2, 2)
    p.b[1] = 100.0
    c0 = np.array([0.7, -1.3])
    _, c = lstm_cell_step(np.zeros(2), np.zeros(2), c0, p)
    np.testing.assert_allclose(c, c0, rtol=1e-12)


def test_cell_matches_scalar_equations():
    rng = np.random.default_rng(0)
    p = rand_cell(rng, 2, 2)
    x, h, c = rng.normal(size=2), rng.normal(size=2), rng.normal(size=2)
    got = lstm_cell_step(x, h, c, p)
    want = scalar_cell(x, h, c, p)
    np.testing.assert_allclose(got[0], want[0], rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(got[1], want[1], rtol=1e-13, atol=1e-15)


def test_cell_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        lstm_cell_step(np.zeros(3), np.zeros(2), np.zeros(2), zero_cell(2, 2))


def unrolled_layer(seq, fwd, bwd, return_sequences):
    T, h = len(seq), fwd.d_h
    hf, hb = [None] * T, [None] * T
    s = (np.zeros(h), np.zeros(h))
    for t in range(T):
        s = scalar_cell(seq[t], *s, fwd)
        hf[t] = s[0]
    s = (np.zeros(h), np.zeros(h))
    for t in reversed(range(T)):
        s = scalar_cell(seq[t], *s, bwd)
        hb[t] = s[0]
    if return_sequences:
        return np.array([np.concatenate([hf[t], hb[t]]) for t in range(T)])
    return np.concatenate([hf[-1], hb[0]])


@pytest.mark.parametrize("return_sequences", [True, False])
def test_layer_matches_unrolled_oracle(return_sequences):
    rng = np.random.default_rng(1)
    fwd, bwd = rand_cell(rng, 2, 2), rand_cell(rng, 2, 2)
    seq = rng.normal(size=(3, 2))
    np.testing.assert_allclose(
        bilstm_layer(seq, fwd, bwd, return_sequences), unrolled_layer(seq, fwd, bwd, return_sequences), atol=1e-14
    )


def test_layer_single_step_symmetry():
    rng = np.random.default_rng(2)
    p = rand_cell(rng, 3, 2)
    out = bilstm_layer(rng.normal(size=(1, 3)), p, p, True)
    np.testing.assert_array_equal(out[0, :2], out[0, 2:])


def test_layer_palindrome_symmetry():
    rng = np.random.default_rng(3)
    p = rand_cell(rng, 2, 3)
    half = rng.normal(size=(3, 2))
    seq = np.vstack([half, half[::-1]])
    out = bilstm_layer(seq, p, p, True)
    T = len(seq)
    for t in range(T):
        np.testing.assert_allclose(out[t, :3], out[T - 1 - t, 3:], atol=1e-14)


def test_layer_rejects_bad_shape():
    p = zero_cell(2, 2)
    with pytest.raises(ShapeMismatch):
        bilstm_layer(np.zeros((0, 2)), p, p, True)
    with pytest.raises(ShapeMismatch):
        bilstm_layer(np.zeros((3, 5)), p, p, True)


# --- model ---------------------------------------------------------------------

TINY = ModelShape(seq_len=4, embed_dim=3, hidden=2, dense=4)


def oracle_forward(x, params):
    seq = x
    layers = params.shape.layers
    for layer in range(layers):
        fwd, bwd = params.cells[2 * layer], params.cells[2 * layer + 1]
        seq = unrolled_layer(seq, fwd, bwd, layer < layers - 1)
    hidden = np.maximum(0.0, seq @ params.dense_W + params.dense_b)
    logit = float(hidden @ params.out_W[:, 0] + params.out_b[0])
    return sig(logit)


def randomized(shape, seed, noise=0.3):
    rng = np.random.default_rng(seed)
    vec = flatten(init_params(seed, shape)) + rng.normal(scale=noise, size=shape.num_params)
    return unflatten(vec, shape)


def test_forward_matches_layer_chain():
    rng = np.random.default_rng(4)
    params = randomized(TINY, 4)
    x = rng.normal(size=(5, TINY.seq_len, TINY.embed_dim))
    p, _ = forward(x, params)
    np.testing.assert_allclose(p, [oracle_forward(xi, params) for xi in x], rtol=1e-12)


def test_forward_zero_weights_gives_half():
    params = unflatten(np.zeros(TINY.num_params), TINY)
    p, _ = forward(np.zeros((TINY.seq_len, TINY.embed_dim)), params)
    assert p.tolist() == [0.5]


def test_forward_range():
    rng = np.random.default_rng(6)
    params = unflatten(rng.normal(scale=5, size=TINY.num_params), TINY)
    p, _ = forward(rng.normal(scale=10, size=(20, TINY.seq_len, TINY.embed_dim)), params)
    assert np.all(np.isfinite(p)) and np.all((p >= 0) & (p <= 1))


def test_forward_shape_errors():
    params = init_params(0, TINY)
    with pytest.raises(ShapeMismatch):
        forward(np.zeros((4, 5)), params)


def test_batch_composition_invariance():
    rng = np.random.default_rng(7)
    params = randomized(TINY, 7)
    x = rng.normal(size=(6, TINY.seq_len, TINY.embed_dim))
    full, _ = forward(x, params)
    for i in range(6):
        alone, _ = forward(x[i], params)
        np.testing.assert_allclose(alone[0], full[i], rtol=1e-14)
    np.testing.assert_allclose(forward(x[[3, 1]], params)[0], full[[3, 1]], rtol=1e-14)


def test_init_determinism_and_forget_bias():
    a, b, c = init_params(1, TINY), init_params(1, TINY), init_params(2, TINY)
    assert np.array_equal(flatten(a), flatten(b))
    assert not np.array_equal(flatten(a), flatten(c))
    for cell in a.cells:
        assert (cell.b[1] == 1.0).all()
        assert not cell.b[[0, 2, 3]].any()
    assert not a.dense_b.any() and not a.out_b.any()


def test_glorot_bounds():
    p = init_params(3, FULL_SHAPE)
    lim = math.sqrt(6.0 / (200 + 200))
    assert np.abs(p.dense_W).max() <= lim


def test_full_shape_parameter_count():
    def cell(d_in, h):
        return 4 * (d_in * h + h * h + h)

    expected = 2 * cell(100, 100) + 4 * cell(200, 100) + (200 * 200 + 200) + (200 + 1)
    assert FULL_SHAPE.num_params == expected == 682801
    assert flatten(init_params(0, FULL_SHAPE)).size == expected


def test_flatten_round_trip_and_order():
    vec = np.arange(TINY.num_params, dtype=np.float64)
    params = unflatten(vec, TINY)
    assert np.array_equal(flatten(params), vec)
    # canonical order starts with layer 0 forward input gate W (3 x 2), then its U, then its b
    assert params.cells[0].W[0].ravel().tolist() == [0, 1, 2, 3, 4, 5]
    assert params.cells[0].U[0].ravel().tolist() == [6, 7, 8, 9]
    assert params.cells[0].b[0].tolist() == [10, 11]
    assert params.cells[0].W[1].ravel()[0] == 12
    assert params.out_b.tolist() == [vec[-1]]
    with pytest.raises(LengthMismatch):
        unflatten(vec[:-1], TINY)


def test_flatten_injective():
    a = init_params(0, TINY)
    b = a.copy()
    assert np.array_equal(flatten(a), flatten(b))
    b.cells[5].U[3, 1, 0] += 1e-12
    assert not np.array_equal(flatten(a), flatten(b))


@pytest.mark.parametrize("p, y, want", [(0.5, 1, math.log(2)), (0.9, 0, -math.log(0.1)), (1.0, 1, -math.log1p(-1e-7))])
def test_bce(p, y, want):
    assert bce_loss([p], [y]) == pytest.approx(want, rel=1e-12)


def test_bce_mean_and_clamp():
    assert bce_loss([0.5, 0.9], [1, 0]) == pytest.approx((math.log(2) - math.log(0.1)) / 2)
    assert bce_loss([0.0], [1]) == pytest.approx(-math.log(1e-7))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_finite_differences(seed):
    report = check_gradients(SMALL_SHAPE, seed)
    assert report.n_params == SMALL_SHAPE.num_params
    assert report.passed(1e-4), report.max_rel_error


def test_relative_error_floor():
    assert relative_error(np.array([1e-9]), np.array([1.1e-9]))[0] < 1e-3
    assert relative_error(np.array([1.0]), np.array([1.1]))[0] == pytest.approx(0.1 / 1.1)


def test_duplicate_sample_gradient():
    rng = np.random.default_rng(8)
    params = randomized(TINY, 8)
    x = rng.normal(size=(1, TINY.seq_len, TINY.embed_dim))
    _, g1 = loss_and_grad(x, [1], params)
    _, g2 = loss_and_grad(np.concatenate([x, x]), [1, 1], params)
    np.testing.assert_allclose(g2, g1, rtol=1e-12, atol=1e-18)


def test_batch_gradient_is_mean():
    rng = np.random.default_rng(9)
    params = randomized(TINY, 9)
    x = rng.normal(size=(3, TINY.seq_len, TINY.embed_dim))
    y = [1, 0, 1]
    _, g = loss_and_grad(x, y, params)
    each = [loss_and_grad(x[i : i + 1], [y[i]], params)[1] for i in range(3)]
    np.testing.assert_allclose(g, np.mean(each, axis=0), rtol=1e-10, atol=1e-16)


def test_gradient_zero_at_perfect_fit():
    params = init_params(0, TINY)
    params.out_b[:] = 50.0
    x = np.random.default_rng(1).normal(size=(2, TINY.seq_len, TINY.embed_dim))
    p, cache = forward(x, params)
    assert bce_loss(p, [1, 1]) < 1e-6
    assert np.linalg.norm(backward(cache, [1, 1])) < 1e-9


def test_evaluate_constant_half_model():
    params = unflatten(np.zeros(TINY.num_params), TINY)
    x = np.zeros((10, TINY.seq_len, TINY.embed_dim))
    y = np.array([1] * 5 + [0] * 5)
    assert evaluate(params, x, y) == 0.5
    assert evaluate(params, x, np.ones(10)) == 1.0
    with pytest.raises(EmptyDataset):
        evaluate(params, x[:0], y[:0])


def test_untrained_models_near_chance():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(200, TINY.seq_len, TINY.embed_dim))
    y = np.array([0, 1] * 100)
    accs = [evaluate(init_params(s, TINY), x, y) for s in range(10)]
    assert abs(np.mean(accs) - 0.5) <= 0.05


def test_predict_chunking():
    rng = np.random.default_rng(12)
    params = randomized(TINY, 12)
    x = rng.normal(size=(7, TINY.seq_len, TINY.embed_dim))
    np.testing.assert_allclose(predict_proba(x, params, chunk=2), forward(x, params)[0], rtol=1e-14)


# --- checkpoint ------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    vec = flatten(randomized(TINY, 1))
    path = tmp_path / "c.npz"
    save_checkpoint(path, vec, TINY, {"round": 3})
    loaded, desc = load_checkpoint(path, TINY)
    assert np.array_equal(loaded, vec)
    assert desc["meta"]["round"] == 3


def test_checkpoint_refuses_other_shape(tmp_path):
    path = tmp_path / "c.npz"
    save_checkpoint(path, flatten(init_params(0, TINY)), TINY)
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, ModelShape(seq_len=4, embed_dim=3, hidden=3, dense=4))


def test_checkpoint_unreadable(tmp_path):
    bad = tmp_path / "x.npz"
    bad.write_bytes(b"not a zip")
    with pytest.raises(DataUnreadable):
        load_checkpoint(bad)
