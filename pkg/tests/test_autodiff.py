import numpy as np
import pytest

from motionflow import autodiff as ad
from motionflow.errors import ShapeError, StateError
from motionflow.params import Adam, PredictorParams, adam_step


def numeric_grad(fn, x, eps=1e-6):
    """Central finite differences of a scalar function of one array."""
    g = np.zeros_like(x)
    flat = x.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = fn(x)
        flat[i] = orig - eps
        down = fn(x)
        flat[i] = orig
        g.ravel()[i] = (up - down) / (2 * eps)
    return g


def check_primitive(build, x, atol=1e-6):
    """Tape gradient vs finite differences for one input tensor."""
    t = ad.Tensor(x.copy())
    with ad.Tape() as tape:
        loss = build(t)
    ad.backward(tape, loss)
    numeric = numeric_grad(lambda a: float(ad.value_of(build(ad.Tensor(a)))), x.copy())
    assert np.allclose(t.grad, numeric, atol=atol), (
        f"max abs err {np.max(np.abs(t.grad - numeric))}")


RNG = np.random.default_rng(12345)


def test_matmul_gradient():
    x = RNG.standard_normal((3, 4))
    w = RNG.standard_normal((4, 2))
    check_primitive(lambda t: ad.sum_all(ad.matmul(t, w)), x)


def test_add_bias_broadcast_gradient():
    x = RNG.standard_normal((3, 4))
    b = RNG.standard_normal(4)
    tb = ad.Tensor(b.copy())
    with ad.Tape() as tape:
        loss = ad.sum_all(ad.mul(ad.add(x, tb), ad.add(x, tb)))
    ad.backward(tape, loss)
    numeric = numeric_grad(lambda a: float(((x + a) ** 2).sum()), b.copy())
    assert np.allclose(tb.grad, numeric, atol=1e-6)


def test_mul_sub_neg_abs_gradients():
    x = RNG.standard_normal((4, 3)) + 0.5  # stay clear of |.| kink
    y = RNG.standard_normal((4, 3))
    check_primitive(lambda t: ad.sum_all(ad.mul(t, y)), x)
    check_primitive(lambda t: ad.sum_all(ad.sub(t, y)), x)
    check_primitive(lambda t: ad.sum_all(ad.neg(t)), x)
    check_primitive(lambda t: ad.sum_all(ad.absolute(t)), x)


def test_gelu_layernorm_softmax_gradients():
    x = RNG.standard_normal((4, 6))
    cotangent = RNG.standard_normal((4, 6))
    check_primitive(lambda t: ad.sum_all(ad.gelu(t)), x)
    check_primitive(lambda t: ad.sum_all(ad.mul(ad.layer_norm(t), cotangent)), x)
    check_primitive(lambda t: ad.sum_all(ad.mul(ad.softmax_rows(t), cotangent)), x)


def test_slice_concat_transpose_gradients():
    x = RNG.standard_normal((5, 6))
    cotangent = RNG.standard_normal((5, 12))
    check_primitive(lambda t: ad.sum_all(ad.slice_rows(t, 1, 4)), x)
    check_primitive(lambda t: ad.sum_all(ad.slice_cols(t, 2, 5)), x)
    check_primitive(lambda t: ad.sum_all(ad.transpose(t)), x)
    check_primitive(
        lambda t: ad.sum_all(ad.concat_rows([ad.slice_rows(t, 0, 2), ad.slice_rows(t, 2, 5)])), x)
    check_primitive(
        lambda t: ad.sum_all(ad.mul(ad.concat_cols([t, t]), cotangent)), x)


def test_banded_attention_gradient():
    from motionflow.layers import BandLayout
    layout = BandLayout(2, 5, 1)  # two stacked sequences of 5 frames
    q = RNG.standard_normal((10, 3))
    k = RNG.standard_normal((10, 3))
    v = RNG.standard_normal((10, 3))
    w = RNG.standard_normal((10, 3))

    for which in range(3):
        arrays = [q.copy(), k.copy(), v.copy()]

        def build(t, which=which, arrays=arrays):
            ops = [ad.Tensor(a) for a in arrays]
            ops[which] = t
            return ad.sum_all(ad.mul(ad.banded_softmax_attention(
                ops[0], ops[1], ops[2], layout.offsets, layout.index_lists), w))

        check_primitive(build, arrays[which])


def test_quadratic_loss_gradient_is_input():
    w = ad.Tensor(RNG.standard_normal((1, 5)))
    with ad.Tape() as tape:
        loss = ad.scale(ad.sum_all(ad.mul(w, w)), 0.5)
    ad.backward(tape, loss)
    assert np.allclose(w.grad, w.value, atol=0)


def test_dense_bias_gradient_is_row_count():
    from motionflow.layers import dense
    x = RNG.standard_normal((7, 3))
    wt = ad.Tensor(RNG.standard_normal((3, 2)))
    bt = ad.Tensor(np.zeros(2))
    with ad.Tape() as tape:
        loss = ad.sum_all(dense(x, wt, bt))
    ad.backward(tape, loss)
    assert np.allclose(bt.grad, np.full(2, 7.0), atol=0)


def test_backward_requires_tape_and_scalar():
    with pytest.raises(StateError):
        ad.backward(None, ad.Tensor(1.0))
    with pytest.raises(StateError):
        ad.backward(ad.Tape(), ad.Tensor(1.0))
    t = ad.Tensor(RNG.standard_normal((2, 2)))
    with ad.Tape() as tape:
        out = ad.mul(t, 2.0)
    with pytest.raises(StateError):
        ad.backward(tape, out)


def test_no_tape_means_no_graph():
    t = ad.Tensor(np.ones((2, 2)))
    out = ad.mul(t, 3.0)
    assert out._parents == () and out._vjp is None


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_determinism_bitwise():
    x = RNG.standard_normal((6, 6))
    a = ad.value_of(ad.gelu(ad.layer_norm(ad.Tensor(x))))
    b = ad.value_of(ad.gelu(ad.layer_norm(ad.Tensor(x))))
    assert np.array_equal(a, b)


def test_backward_determinism_bitwise():
    x = RNG.standard_normal((5, 4))
    w = RNG.standard_normal((4, 4))
    grads = []
    for _ in range(2):
        t = ad.Tensor(x.copy())
        with ad.Tape() as tape:
            loss = ad.sum_all(ad.gelu(ad.matmul(ad.layer_norm(t), w)))
        ad.backward(tape, loss)
        grads.append(t.grad.copy())
    assert np.array_equal(grads[0], grads[1])


# -- Adam ---------------------------------------------------------------------

def test_adam_zero_gradient_is_noop():
    value, m, v = np.array([1.5]), np.zeros(1), np.zeros(1)
    new, m, v = adam_step(value, np.zeros(1), m, v, lr=0.1, step=1)
    assert np.array_equal(new, value)


def test_adam_first_step_magnitude():
    # bias-corrected first step moves by ~lr regardless of gradient scale
    new, _, _ = adam_step(np.array([0.0]), np.array([1.0]),
                          np.zeros(1), np.zeros(1), lr=0.1, step=1)
    assert abs(new[0] + 0.1) < 1e-8


def test_adam_three_step_trace_matches_reference():
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    grads = [0.8, -0.3, 1.2]

    # independent reference: textbook update written out longhand
    theta_ref, m_ref, v_ref = 0.4, 0.0, 0.0
    for step, g in enumerate(grads, start=1):
        m_ref = b1 * m_ref + (1 - b1) * g
        v_ref = b2 * v_ref + (1 - b2) * g * g
        theta_ref -= lr * (m_ref / (1 - b1**step)) / (
            np.sqrt(v_ref / (1 - b2**step)) + eps)

    value, m, v = np.array([0.4]), np.zeros(1), np.zeros(1)
    for step, g in enumerate(grads, start=1):
        value, m, v = adam_step(value, np.array([g]), m, v, lr, b1, b2, eps, step)
    assert abs(value[0] - theta_ref) < 1e-12


def test_adam_over_params_matches_arraywise():
    params = PredictorParams()
    t = params.add("w", RNG.standard_normal((2, 2)))
    opt = Adam(params, lr=0.01)
    g = RNG.standard_normal((2, 2))
    t.grad = g.copy()
    before = t.value.copy()
    opt.step()
    expected, _, _ = adam_step(before, g, np.zeros((2, 2)), np.zeros((2, 2)),
                               lr=0.01, step=1)
    assert np.allclose(t.value, expected, atol=0)


def test_flat_index_roundtrip():
    params = PredictorParams()
    params.add("a", np.arange(6, dtype=float).reshape(2, 3))
    params.add("b", np.arange(4, dtype=float) + 100)
    assert params.count == 10
    assert params.get_flat(0) == 0.0
    assert params.get_flat(6) == 100.0
    params.set_flat(7, -1.0)
    assert params["b"].value[1] == -1.0
    with pytest.raises(IndexError):
        params.get_flat(10)
