import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metamolgen import diffnum as dn
from metamolgen.diffnum import DiffnumError, Tape, backward

from gradcheck import PRIMITIVES, fd_relative_error, run_primitive_checks


def test_matmul_identity_selects_column():
    t = Tape()
    A = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    sel = np.array([[0.0], [1.0], [0.0]])
    out = t.matmul(A, sel)
    assert out.shape == (2, 1)
    np.testing.assert_array_equal(out.value[:, 0], A[:, 1])


def test_softmax_symmetric_and_gelu_zero():
    t = Tape()
    np.testing.assert_allclose(t.softmax(np.zeros(2)).value, [0.5, 0.5])
    assert t.gelu(np.zeros(1)).value[0] == 0.0


def test_shape_mismatch_names_op():
    t = Tape()
    with pytest.raises(DiffnumError, match="matmul"):
        t.matmul(np.ones((2, 3)), np.ones((2, 1)))


def test_non_finite_output_is_an_error():
    t = Tape()
    with pytest.raises(DiffnumError, match="non-finite"):
        t.exp(np.array([1000.0]))
    with pytest.raises(DiffnumError):
        t.log(np.array([0.0]))


def test_square_derivative():
    t = Tape()
    th = t.param("theta", np.array(3.0))
    g = backward(t, t.square(th))
    assert g["theta"] == pytest.approx(6.0)


def test_constant_loss_gives_zero_grads():
    t = Tape()
    t.param("a", np.ones(3))
    t.param("b", np.ones((2, 2)))
    loss = t.sum(t.constant(np.array([1.0, 2.0])))
    g = backward(t, loss)
    assert all(np.all(v == 0) for v in g.values())
    assert g["b"].shape == (2, 2)


def test_backward_errors():
    t = Tape()
    with pytest.raises(DiffnumError):
        backward(t, None)
    p = t.param("p", np.ones(3))
    with pytest.raises(DiffnumError, match="scalar"):
        backward(t, t.tanh(p))
    other = Tape()
    with pytest.raises(DiffnumError):
        backward(other, t.sum(p))


def test_two_layer_net_matches_finite_differences():
    rng = np.random.default_rng(0)
    params = {"w1": rng.normal(size=(4, 6)), "b1": rng.normal(size=6),
              "w2": rng.normal(size=(6, 3)), "b2": rng.normal(size=3)}
    x = rng.normal(size=(5, 4))
    y = rng.integers(0, 3, size=(1, 5))

    def build(t, P):
        h = t.gelu(t.add(t.matmul(x, P["w1"]), P["b1"]))
        logits = t.add(t.matmul(h, P["w2"]), P["b2"])
        return dn.cross_entropy_loss(t, t.reshape(logits, (1, 5, 3)), y, pad_id=-1)

    for name, err in fd_relative_error(build, params).items():
        assert err < 1e-4, name


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradcheck_100_cases(name):
    worst = run_primitive_checks(name, n_cases=100, seed=zlib.crc32(name.encode()))
    assert worst < 1e-4, f"{name}: worst relative error {worst:.2e}"


def test_linearity_of_backward():
    rng = np.random.default_rng(1)
    params = {"w": rng.normal(size=(3, 3)), "v": rng.normal(size=3)}
    x = rng.normal(size=(4, 3))
    a, b = 0.7, -1.3

    def f(t, P):
        return t.sum(t.tanh(t.matmul(x, P["w"])))

    def g(t, P):
        return t.sum(t.mul(t.sigmoid(t.add(t.matmul(x, P["w"]), P["v"])), 2.0))

    def grads(build):
        t = Tape()
        P = t.params(params)
        return backward(t, build(t, P))

    gf, gg = grads(f), grads(g)
    gc = grads(lambda t, P: t.add(t.mul(f(t, P), a), t.mul(g(t, P), b)))
    for k in params:
        np.testing.assert_allclose(gc[k], a * gf[k] + b * gg[k], atol=1e-10, rtol=0)


def test_determinism_bitwise():
    rng = np.random.default_rng(2)
    params = {"w": rng.normal(size=(5, 7)), "g": np.ones(7), "b": np.zeros(7)}
    x = rng.normal(size=(3, 5))
    mask = rng.random((3, 7)) > 0.2

    def run():
        t = Tape()
        P = t.params(params)
        h = t.layer_norm(t.matmul(x, P["w"]), P["g"], P["b"])
        loss = t.mean(t.square(t.dropout(h, mask, 0.2)))
        return loss.value.tobytes(), {k: v.tobytes() for k, v in backward(t, loss).items()}

    assert run() == run()


# ---------------------------------------------------------------- optimizers

def test_sgd_examples():
    assert dn.sgd_step({"t": np.array(0.0)}, {"t": np.array(2.0)}, 0.5)["t"] == -1.0
    out = dn.sgd_step({"t": np.array([1.0, 2.0])}, {"t": np.array([1.0, 1.0])}, 0.1)
    np.testing.assert_allclose(out["t"], [0.9, 1.9])
    same = dn.sgd_step({"t": np.array([3.0])}, {"t": np.array([0.0])}, 0.1)
    assert same["t"][0] == 3.0


def test_sgd_rejects_bad_inputs():
    with pytest.raises(DiffnumError):
        dn.sgd_step({"t": np.zeros(1)}, {"t": np.array([np.nan])}, 0.1)
    with pytest.raises(DiffnumError):
        dn.sgd_step({"t": np.zeros(1)}, {"t": np.zeros(1)}, 0.0)
    with pytest.raises(DiffnumError):
        dn.sgd_step({"t": np.zeros(1)}, {"t": np.zeros(2)}, 0.1)


def test_adam_first_step_moves_by_lr():
    p = {"t": np.array([0.5])}
    s = dn.adam_init(p, 0.001, 0.0)
    out = dn.adam_step(s, p, {"t": np.array([1.0])})
    # m_hat / sqrt(v_hat) = 1 exactly at step 1, up to eps
    assert out["t"][0] == pytest.approx(0.5 - 0.001, abs=1e-10)
    assert s.step == 1


def test_adam_zero_grad_and_decay_only():
    p = {"t": np.array([2.0])}
    s = dn.adam_init(p, 0.001, 0.0)
    q = p
    for _ in range(5):
        q = dn.adam_step(s, q, {"t": np.zeros(1)})
    assert q["t"][0] == 2.0
    s = dn.adam_init(p, 0.001, 0.01)
    q = p
    for k in range(1, 4):
        q = dn.adam_step(s, q, {"t": np.zeros(1)})
        assert q["t"][0] == pytest.approx(2.0 * (1 - 1e-5) ** k, rel=1e-14)


def test_adam_uninitialized_and_step_counter():
    with pytest.raises(DiffnumError):
        dn.adam_step(dn.OptimState(), {"t": np.zeros(1)}, {"t": np.zeros(1)})
    p = {"t": np.zeros(2)}
    s = dn.adam_init(p)
    steps = []
    for _ in range(3):
        p = dn.adam_step(s, p, {"t": np.ones(2)})
        steps.append(s.step)
        assert s.m["t"].shape == p["t"].shape
    assert steps == [1, 2, 3]


# ------------------------------------------------------------ cross-entropy

def test_cross_entropy_examples():
    t = Tape()
    V = 33
    logits = np.full((1, 1, V), -1e3)
    logits[0, 0, 5] = 1e3
    assert dn.cross_entropy_loss(t, t.constant(logits), [[5]], pad_id=0).value == pytest.approx(0.0)
    uni = dn.cross_entropy_loss(t, t.constant(np.zeros((2, 3, V))), np.full((2, 3), 4), pad_id=0)
    assert uni.value == pytest.approx(np.log(33), abs=1e-12)
    assert np.log(33) == pytest.approx(3.4965, abs=1e-4)


def test_cross_entropy_masks_pad():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(1, 2, 6))
    t = Tape()
    both = dn.cross_entropy_loss(t, t.constant(logits), [[4, 0]], pad_id=0).value
    single = dn.cross_entropy_loss(t, t.constant(logits[:, :1]), [[4]], pad_id=0).value
    assert both == pytest.approx(single, abs=1e-15)
    with pytest.raises(DiffnumError, match="PAD"):
        dn.cross_entropy_loss(t, t.constant(logits), [[0, 0]], pad_id=0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8))
def test_softmax_is_a_distribution(xs):
    p = Tape().softmax(np.array(xs)).value
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_lstm_step_matches_cell():
    rng = np.random.default_rng(4)
    B, H = 3, 4
    xw, h, c, w = rng.normal(size=(B, 4 * H)), rng.normal(size=(B, H)), rng.normal(size=(B, H)), rng.normal(size=(H, 4 * H))
    t = Tape()
    h1, c1 = t.lstm_cell(xw, h, c, w)
    h2, c2, _ = dn.lstm_step(xw, h, c, w)
    np.testing.assert_allclose(h1.value, h2, atol=1e-14)
    np.testing.assert_allclose(c1.value, c2, atol=1e-14)
