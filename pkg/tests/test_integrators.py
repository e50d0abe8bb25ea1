from fractions import Fraction

import numpy as np
import pytest

from rksysid.cells import (
    AsrnnParams,
    EmbedParams,
    GruParams,
    asrnn_cell,
    embed_input,
    gru_cell,
)
from rksysid.integrators import (
    SCHEMES,
    StepSpec,
    convergence_order,
    interpolate_input,
    order_condition_residuals,
    rk_step,
    slope,
    tableau,
)
from rksysid.verify import ORDER_TOL, rollout_gradcheck

# Exact tableau coefficients for the rational-arithmetic oracle.
F = Fraction
EXACT = {
    "euler": {"c": [0], "b": [1], "a": [[0]]},
    "midpoint": {"c": [0, F(1, 2)], "b": [0, 1], "a": [[0, 0], [F(1, 2), 0]]},
    "kutta3": {
        "c": [0, F(1, 2), 1],
        "b": [F(1, 6), F(2, 3), F(1, 6)],
        "a": [[0, 0, 0], [F(1, 2), 0, 0], [-1, 2, 0]],
    },
    "rk4": {
        "c": [0, F(1, 2), F(1, 2), 1],
        "b": [F(1, 6), F(1, 3), F(1, 3), F(1, 6)],
        "a": [
            [0, 0, 0, 0],
            [F(1, 2), 0, 0, 0],
            [0, F(1, 2), 0, 0],
            [0, 0, 1, 0],
        ],
    },
}


def test_tableau_reference_coefficients():
    assert np.array_equal(tableau("euler").b, [1.0])
    k3 = tableau("kutta3")
    assert k3.a[2][0] == -1.0 and k3.a[2][1] == 2.0
    assert np.array_equal(tableau("rk4").b, [1 / 6, 1 / 3, 1 / 3, 1 / 6])
    assert tableau("midpoint").a[1][0] == 0.5


def test_tableau_orders_and_stage_counts():
    for name, order in (("euler", 1), ("midpoint", 2), ("kutta3", 3), ("rk4", 4)):
        tb = tableau(name)
        assert tb.order == order
        assert tb.stages == order  # these four methods have s = p


def test_unknown_tableau_rejected():
    with pytest.raises(ValueError, match="unknown scheme"):
        tableau("heun")


def test_tableau_matches_exact_rationals_bitwise():
    for name, exact in EXACT.items():
        tb = tableau(name)
        for i in range(tb.stages):
            assert tb.c[i] == float(exact["c"][i])
            assert tb.b[i] == float(exact["b"][i])
            for j in range(tb.stages):
                assert tb.a[i][j] == float(exact["a"][i][j])


def test_order_conditions_exact_in_rational_arithmetic():
    for name, exact in EXACT.items():
        c, b, a = exact["c"], exact["b"], exact["a"]
        s = len(b)
        order = tableau(name).order
        assert sum(b, F(0)) == 1
        for i in range(s):
            assert sum(a[i], F(0)) == c[i]  # consistency
            for j in range(i, s):
                assert a[i][j] == 0  # strictly lower triangular
        if order >= 2:
            assert sum((b[i] * c[i] for i in range(s)), F(0)) == F(1, 2)
        if order >= 3:
            assert sum((b[i] * c[i] ** 2 for i in range(s)), F(0)) == F(1, 3)
            double = sum(
                (b[i] * a[i][j] * c[j] for i in range(s) for j in range(s)), F(0)
            )
            assert double == F(1, 6)


def test_order_condition_residuals_tiny_in_floats():
    for name in SCHEMES:
        res = order_condition_residuals(tableau(name))
        for key, value in res.items():
            assert abs(value) <= 1e-15, (name, key, value)


def test_slope_stationary_fixed_point():
    spec = StepSpec(tableau=tableau("euler"), mu_delta=0.5)
    h = np.array([0.3, -0.2])
    out = slope("stationary", lambda x, hh: hh, np.zeros(2), h, spec)
    assert np.array_equal(out, np.zeros(2))


def test_slope_stationary_zero_param_gru():
    p = GruParams(*(np.zeros(s) for s in [(1, 1)] * 6 + [(1,)] * 3))
    spec = StepSpec(tableau=tableau("euler"), mu_delta=0.2)
    cell_fn = lambda x, h: gru_cell(x, h, p)
    out = slope("stationary", cell_fn, np.zeros(1), np.array([0.4]), spec)
    assert out[0] == pytest.approx(-1.0, abs=1e-14)  # (0.2 - 0.4) / 0.2


def test_slope_non_stationary_zero_asrnn():
    p = AsrnnParams(w_h=np.zeros((2, 2)), w_z=np.zeros((2, 2)), m=np.zeros((2, 2)),
                    b_h=np.zeros(2), b_z=np.zeros(2), gamma=0.0, epsilon=1.0)
    spec = StepSpec(tableau=tableau("euler"), formulation="non-stationary",
                    mu_delta=0.7)
    cell_fn = lambda x, h: asrnn_cell(x, h, p)
    out = slope("non-stationary", cell_fn, np.zeros(2), np.array([0.5, -0.5]), spec)
    assert np.array_equal(out, np.zeros(2))


def test_slope_asrnn_epsilon_scaling():
    spec = StepSpec(tableau=tableau("euler"), mu_delta=0.5)
    h = np.array([0.2])
    f = lambda x, hh: np.array([0.6])
    out = slope("stationary", f, np.zeros(1), h, spec, epsilon=0.5)
    assert out[0] == pytest.approx((0.5 * 0.6 - 0.2) / 0.5, abs=1e-15)
    out_ns = slope("non-stationary", f, np.zeros(1), h, spec, epsilon=0.5,
                   scaled_incremental=True)
    assert out_ns[0] == pytest.approx(0.5 * 0.6 / 0.5, abs=1e-15)


def test_slope_non_stationary_gru_is_raw_cell_output():
    # the incremental GRU baseline uses the unnormalized update
    # h + delta_n * f(x, h)
    spec = StepSpec(tableau=tableau("euler"), mu_delta=0.5)
    f = lambda x, hh: np.array([0.6])
    out = slope("non-stationary", f, np.zeros(1), np.array([0.2]), spec)
    assert out[0] == 0.6


def test_interpolate_endpoints_and_midpoint():
    x0 = np.array([0.0])
    x1 = np.array([2.0])
    assert interpolate_input(x0, x1, 0.0, "linear") is x0
    assert np.array_equal(interpolate_input(x0, x1, 1.0, "linear"), [2.0])
    assert np.array_equal(interpolate_input(x0, x1, 0.5, "linear"), [1.0])
    assert interpolate_input(x0, x1, 0.5, "constant") is x0


def _standin_spec(scheme):
    return StepSpec(tableau=tableau(scheme), mu_delta=1.0)


def _identity_embed(x):
    return x


def test_rk_step_zero_dynamics():
    spec = _standin_spec("rk4")
    h = np.zeros(3)
    out = rk_step(spec, None, _identity_embed, h, h, 0.1, h,
                  slope_fn=lambda x, hh: np.zeros(3))
    assert np.array_equal(out, np.zeros(3))


def test_rk_step_euler_decay():
    spec = _standin_spec("euler")
    out = rk_step(spec, None, _identity_embed, np.zeros(1), np.zeros(1), 0.1,
                  np.array([1.0]), slope_fn=lambda x, h: -h)
    assert out[0] == pytest.approx(0.9, abs=1e-16)


def test_rk_step_rk4_matches_hand_staged_oracle():
    # independent stage-by-stage evaluation of dh/dt = -h at delta = 0.1
    delta, h0 = 0.1, 1.0
    k1 = -h0
    k2 = -(h0 + 0.5 * delta * k1)
    k3 = -(h0 + 0.5 * delta * k2)
    k4 = -(h0 + delta * k3)
    expected = h0 + delta * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    assert expected == pytest.approx(0.90483750, abs=1e-8)
    assert abs(expected - np.exp(-0.1)) < 1e-7  # 4-term Taylor vs exact flow

    spec = _standin_spec("rk4")
    out = rk_step(spec, None, _identity_embed, np.zeros(1), np.zeros(1), delta,
                  np.array([h0]), slope_fn=lambda x, h: -h)
    assert out[0] == pytest.approx(expected, abs=1e-15)


def test_rk_step_rejects_nonpositive_delta():
    spec = _standin_spec("euler")
    with pytest.raises(ValueError, match="delta"):
        rk_step(spec, None, _identity_embed, np.zeros(1), np.zeros(1), 0.0,
                np.ones(1), slope_fn=lambda x, h: -h)
    with pytest.raises(ValueError, match="delta"):
        rk_step(spec, None, _identity_embed, np.zeros(1), np.zeros(1),
                np.array([[0.5], [-0.1]]), np.ones((2, 1)),
                slope_fn=lambda x, h: -h)


def _small_model(kind, seed=0, k=4, kx=2):
    rng = np.random.default_rng(seed)
    s = 0.15
    embed = EmbedParams(w=rng.normal(size=(k, kx)) * s, b=rng.normal(size=k) * s)
    if kind == "gru":
        cell = GruParams(*(rng.normal(size=sh) * s for sh in
                           [(k, k)] * 6 + [(k,)] * 3))
        eps = 1.0
        cell_fn = lambda x, h: gru_cell(x, h, cell)
        bare = lambda x, h: gru_cell(x, h, cell)
    else:
        cell = AsrnnParams(w_h=rng.normal(size=(k, k)) * s,
                           w_z=rng.normal(size=(k, k)) * s,
                           m=rng.normal(size=(k, k)) * s,
                           b_h=rng.normal(size=k) * s, b_z=rng.normal(size=k) * s,
                           gamma=0.4, epsilon=0.8)
        eps = 0.8
        cell_fn = lambda x, h: asrnn_cell(x, h, cell)
        bare = lambda x, h: 0.8 * asrnn_cell(x, h, cell)
    embed_fn = lambda x_raw: embed_input(x_raw, embed)
    return cell_fn, embed_fn, bare, eps


@pytest.mark.parametrize("kind", ["gru", "asrnn"])
def test_reduction_identity_single_step(kind):
    # delta == mu_delta: the stationary Euler step must equal the bare
    # cell output up to one rounding
    cell_fn, embed_fn, bare, eps = _small_model(kind)
    rng = np.random.default_rng(1)
    spec = StepSpec(tableau=tableau("euler"), mu_delta=0.2)
    for _ in range(50):
        h = rng.uniform(-0.3, 0.3, size=4)
        x = rng.uniform(-0.3, 0.3, size=2)
        stepped = rk_step(spec, cell_fn, embed_fn, x, x, 0.2, h, epsilon=eps)
        expected = bare(embed_fn(x), h)
        assert np.max(np.abs(stepped - expected)) <= 1e-15


@pytest.mark.parametrize("kind", ["gru", "asrnn"])
def test_reduction_identity_hundred_step_rollout(kind):
    cell_fn, embed_fn, bare, eps = _small_model(kind, seed=3)
    rng = np.random.default_rng(2)
    xs = rng.uniform(-0.3, 0.3, size=(101, 2))
    spec = StepSpec(tableau=tableau("euler"), mu_delta=0.2)
    h_rk = np.full(4, 0.1)
    h_bare = np.full(4, 0.1)
    for n in range(100):
        h_rk = rk_step(spec, cell_fn, embed_fn, xs[n], xs[n + 1], 0.2, h_rk,
                       epsilon=eps)
        h_bare = bare(embed_fn(xs[n]), h_bare)
        assert np.max(np.abs(h_rk - h_bare)) <= 1e-15, f"step {n}"


def test_convergence_orders_within_band():
    for name in SCHEMES:
        fitted = convergence_order(name)
        nominal = tableau(name).order
        assert abs(fitted - nominal) <= ORDER_TOL, (name, fitted)


def test_unit_root_coefficient_has_zero_mean():
    rng = np.random.default_rng(5)
    deltas = rng.uniform(0.1, 1.3, size=5000)
    mu = deltas.mean()
    assert abs(np.mean(1.0 - deltas / mu)) <= 1e-12


def test_rk4_rollout_gradients_match_finite_differences():
    err = rollout_gradcheck("gru", "rk4", "stationary", steps=3)
    assert err <= 1e-4


def test_rk_step_batched_matches_per_row():
    # one batched step with per-row deltas equals row-wise single steps
    cell_fn, embed_fn, _, eps = _small_model("gru", seed=9)
    rng = np.random.default_rng(4)
    spec = StepSpec(tableau=tableau("rk4"), interpolation="linear", mu_delta=0.3)
    h = rng.uniform(-0.5, 0.5, size=(5, 4))
    x0 = rng.uniform(-1, 1, size=(5, 2))
    x1 = rng.uniform(-1, 1, size=(5, 2))
    deltas = rng.uniform(0.1, 0.6, size=(5, 1))
    batched = rk_step(spec, cell_fn, embed_fn, x0, x1, deltas, h, epsilon=eps)
    for i in range(5):
        single = rk_step(spec, cell_fn, embed_fn, x0[i], x1[i],
                         float(deltas[i, 0]), h[i], epsilon=eps)
        assert np.allclose(batched[i], single, atol=1e-12)
