import numpy as np
import pytest

from rksysid.tape import (
    ShapeError,
    Tape,
    affine_combine,
    check_gradients,
    elementwise,
    finite_difference_gradient,
    hadamard,
    linear,
    matvec,
    max_relative_error,
    mul_const,
    place_row,
    scale,
    sigmoid,
    sub,
    tanh,
    vsum,
)


def test_matvec_identity():
    tape = Tape()
    w = tape.leaf(np.eye(2), trainable=True)
    v = tape.leaf([3.0, -1.0], trainable=True)
    out = matvec(w, v)
    assert np.array_equal(out.value, [3.0, -1.0])


def test_matvec_hand_case():
    tape = Tape()
    w = tape.leaf([[1.0, 2.0], [0.0, 1.0]])
    v = tape.leaf([1.0, 1.0])
    assert np.array_equal(matvec(w, v).value, [3.0, 1.0])


def test_matvec_against_loop_oracle():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(5, 3))
    v = rng.normal(size=3)
    tape = Tape()
    out = matvec(tape.leaf(w), tape.leaf(v)).value
    for i in range(5):
        expected = sum(w[i][j] * v[j] for j in range(3))
        assert out[i] == pytest.approx(expected, abs=1e-14)


def test_matvec_shape_mismatch_reports_shapes():
    tape = Tape()
    w = tape.leaf(np.zeros((2, 3)))
    v = tape.leaf(np.zeros(2))
    with pytest.raises(ShapeError, match=r"\(2, 3\)"):
        matvec(w, v)


def test_elementwise_trivia():
    tape = Tape()
    z = tape.leaf(np.zeros(4))
    assert np.array_equal(tanh(z).value, np.zeros(4))
    assert np.array_equal(sigmoid(z).value, np.full(4, 0.5))
    a = tape.leaf([2.0, 3.0])
    b = tape.leaf([4.0, -1.0])
    assert np.array_equal(hadamard(a, b).value, [8.0, -3.0])


def test_elementwise_dispatcher():
    tape = Tape()
    a = tape.leaf([1.0, 2.0])
    b = tape.leaf([3.0, 5.0])
    assert np.array_equal(elementwise("add", a, b).value, [4.0, 7.0])
    assert np.array_equal(elementwise("scale", a, 2.0).value, [2.0, 4.0])
    assert np.array_equal(
        elementwise("affine-combine", a, b, 2.0, -1.0).value, [-1.0, -1.0]
    )
    with pytest.raises(ValueError, match="unknown elementwise kind"):
        elementwise("division", a, b)


def test_elementwise_shape_mismatch():
    tape = Tape()
    a = tape.leaf(np.zeros(3))
    b = tape.leaf(np.zeros(4))
    with pytest.raises(ShapeError):
        hadamard(a, b)
    with pytest.raises(ShapeError):
        sub(a, b)


def test_bias_broadcast_add():
    tape = Tape()
    x = tape.leaf(np.ones((4, 3)), trainable=True)
    b = tape.leaf(np.array([1.0, 2.0, 3.0]), trainable=True)
    out = x + b
    assert out.value.shape == (4, 3)
    loss = vsum(out)
    gx, gb = tape.backward(loss, [x, b])
    assert np.array_equal(gx, np.ones((4, 3)))
    assert np.array_equal(gb, np.full(3, 4.0))


def test_backward_square_sum():
    tape = Tape()
    v = tape.leaf([3.0], trainable=True)
    loss = vsum(hadamard(v, v))
    (g,) = tape.backward(loss, [v])
    assert np.array_equal(g, [6.0])


def test_backward_matvec_sum_matches_finite_differences():
    rng = np.random.default_rng(1)
    w0 = rng.normal(size=(3, 4))
    v0 = rng.normal(size=4)

    tape = Tape()
    w = tape.leaf(w0, trainable=True)
    v = tape.leaf(v0, trainable=True)
    loss = vsum(matvec(w, v))
    gw, gv = tape.backward(loss, [w, v])
    assert np.allclose(gw, np.outer(np.ones(3), v0))

    def f(ps):
        return float((ps[0] @ ps[1]).sum())

    num = finite_difference_gradient(f, [w0, v0])
    assert max_relative_error([gw, gv], num) <= 1e-7


def test_backward_disconnected_leaf_is_zero():
    tape = Tape()
    v = tape.leaf([1.0, 2.0], trainable=True)
    other = tape.leaf([5.0], trainable=True)
    loss = vsum(v)
    g_other = tape.backward(loss, [other])[0]
    assert np.array_equal(g_other, [0.0])


def test_backward_rejects_non_scalar_loss():
    tape = Tape()
    v = tape.leaf([1.0, 2.0], trainable=True)
    with pytest.raises(ShapeError):
        tape.backward(v, [v])


def test_backward_gradient_of_loss_wrt_itself_is_one():
    tape = Tape()
    v = tape.leaf([1.0, 2.0], trainable=True)
    loss = vsum(v)
    (g,) = tape.backward(loss, [loss])
    assert g == pytest.approx(1.0)


def test_reverse_sweep_visits_each_entry_once():
    tape = Tape()
    v = tape.leaf([1.0, 2.0], trainable=True)
    a = tanh(v)
    b = sigmoid(v)
    loss = vsum(hadamard(a, b))
    tape.backward(loss, [v])
    assert tape.last_backward_visits <= len(tape)
    # every entry here is on the path, so the sweep touches all of them
    assert tape.last_backward_visits == len(tape)


def test_accumulation_order_independent_to_1e12():
    rng = np.random.default_rng(2)
    v0 = rng.normal(size=6)
    grads = {}
    for order in ("record", "reversed"):
        tape = Tape()
        v = tape.leaf(v0, trainable=True)
        # v feeds three consumers so contributions must be accumulated
        loss = vsum(hadamard(tanh(v), v) + sigmoid(v))
        grads[order] = tape.backward(loss, [v], accumulation_order=order)[0]
    assert np.max(np.abs(grads["record"] - grads["reversed"])) <= 1e-12


def test_linearity_of_differentiation():
    rng = np.random.default_rng(3)
    v0 = rng.normal(size=5)

    def grad_of(build):
        tape = Tape()
        v = tape.leaf(v0, trainable=True)
        return tape.backward(build(v), [v])[0]

    g1 = grad_of(lambda v: vsum(hadamard(v, v)))
    g2 = grad_of(lambda v: vsum(tanh(v)))
    g12 = grad_of(lambda v: vsum(hadamard(v, v)) + vsum(tanh(v)))
    assert np.max(np.abs(g12 - (g1 + g2))) <= 1e-12


def test_composite_gradients_match_finite_differences():
    # 20 random draws through a chain exercising every primitive
    rng = np.random.default_rng(4)
    for _ in range(20):
        w0 = rng.normal(size=(3, 3)) * 0.5
        v0 = rng.normal(size=3)
        b0 = rng.normal(size=3)
        c = rng.normal(size=3)

        def build(tape, leaves):
            w, v, b = leaves
            u = tanh(matvec(w, v) + b)
            z = sigmoid(linear(v, w))
            m = affine_combine(u, z, 0.5, 1.5)
            return vsum(hadamard(m, mul_const(sub(u, z), c)) + scale(v, 0.3))

        err = check_gradients(build, [w0, v0, b0])
        assert err <= 1e-4


def test_linear_batched_matches_matvec_rows():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(4, 3))
    x = rng.normal(size=(6, 3))
    tape = Tape()
    out = linear(tape.leaf(x), tape.leaf(w)).value
    for i in range(6):
        assert np.allclose(out[i], w @ x[i], atol=1e-14)


def test_place_row_routes_gradient_to_row_only():
    base = np.arange(12.0).reshape(4, 3)
    tape = Tape()
    v = tape.leaf([5.0, 5.0, 5.0], trainable=True)
    out = place_row(base, 2, v)
    assert np.array_equal(out.value[2], [5.0, 5.0, 5.0])
    assert np.array_equal(out.value[0], base[0])
    weights = np.zeros((4, 3))
    weights[2] = [1.0, 2.0, 3.0]
    weights[0] = 7.0  # gradient through other rows must not reach v
    loss = vsum(mul_const(out, weights))
    (g,) = tape.backward(loss, [v])
    assert np.array_equal(g, [1.0, 2.0, 3.0])


def test_operations_on_plain_arrays_return_arrays():
    out = tanh(np.zeros(3))
    assert isinstance(out, np.ndarray)
    assert np.array_equal(matvec(np.eye(2), np.array([1.0, 2.0])), [1.0, 2.0])


def test_sigmoid_finite_for_extreme_inputs():
    tape = Tape()
    u = tape.leaf([-1e6, -800.0, 0.0, 800.0, 1e6])
    out = sigmoid(u).value
    assert np.all(np.isfinite(out))
    assert out[0] == 0.0 and out[-1] == 1.0


def test_finite_difference_square():
    g = finite_difference_gradient(lambda p: float(p[0] ** 2), [np.array(3.0)])
    assert abs(float(g[0]) - 6.0) <= 1e-8


def test_finite_difference_tanh():
    g = finite_difference_gradient(
        lambda p: float(np.tanh(p[0])), [np.array(0.5)], step=1e-5
    )
    expected = 1.0 - np.tanh(0.5) ** 2  # = 0.786448...
    assert abs(float(g[0]) - expected) <= 1e-6


def test_finite_difference_constant_function():
    g = finite_difference_gradient(lambda p: 42.0, [np.zeros(4)])
    assert np.array_equal(g[0], np.zeros(4))


def test_finite_difference_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda p: 0.0, [np.zeros(2)], step=0.0)
