"""Explicit Runge-Kutta stepping around a recurrent cell.

The state update integrates dh/dt = F(x, h) across one (possibly
irregular) sampling interval.  The slope F wraps the cell function in
one of three formulations:

* ``stationary``:      F = (eps * f(x, h) - h) / mu_delta.  The hidden
  state's unit root cancels: the update's h coefficient is
  (1 - delta_n/mu_delta), which has zero mean over the data.
* ``non-stationary``:  the incremental scheme with the unit root, kept
  as a baseline.  For the GRU this is the raw extension F = f(x, h)
  (update h + delta_n * f); normalizing it by mu_delta makes the
  per-step growth factor so large that the state overflows within a
  few hundred steps at any fresh initialization, so the raw form is
  the only trainable one.  The ASRNN, whose cell output is bounded,
  uses its original scaled form F = eps * f(x, h) / mu_delta.
* ``ignore-time``:     stationary slope, but the caller substitutes
  delta_n := mu_delta before stepping, which discards interval lengths
  entirely (for evenly spaced data all three coincide up to eps).

``eps`` is the ASRNN scaling factor; it is 1 for the GRU.  For evenly
spaced data the stationary Euler step reduces to the bare cell
recurrence h <- f(x, h) exactly (up to one rounding per component).

Intermediate stages need the input at times between samples; it is
approximated by constant or linear interpolation of the two raw
samples that bracket the step, and embedded afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tape import ShapeError, Tensor, add, affine_combine, mul_const, scale, sub

__all__ = [
    "ButcherTableau",
    "StepSpec",
    "SCHEMES",
    "FORMULATIONS",
    "INTERPOLATIONS",
    "tableau",
    "slope",
    "interpolate_input",
    "rk_step",
    "convergence_order",
    "order_condition_residuals",
]

FORMULATIONS = ("stationary", "non-stationary", "ignore-time")
INTERPOLATIONS = ("constant", "linear")


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients (c, b, a) of an explicit Runge-Kutta method."""

    name: str
    stages: int
    c: np.ndarray  # (s,) stage times, c[0] = 0
    b: np.ndarray  # (s,) combination weights
    a: np.ndarray  # (s, s) strictly lower triangular stage coupling
    order: int


def _make_tableau(name, c, b, a, order):
    c = np.asarray(c, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    return ButcherTableau(name=name, stages=len(b), c=c, b=b, a=a, order=order)


_TABLEAUS = {
    "euler": _make_tableau("euler", [0.0], [1.0], [[0.0]], 1),
    "midpoint": _make_tableau(
        "midpoint", [0.0, 0.5], [0.0, 1.0], [[0.0, 0.0], [0.5, 0.0]], 2
    ),
    "kutta3": _make_tableau(
        "kutta3",
        [0.0, 0.5, 1.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [-1.0, 2.0, 0.0]],
        3,
    ),
    "rk4": _make_tableau(
        "rk4",
        [0.0, 0.5, 0.5, 1.0],
        [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.5, 0.0, 0.0, 0.0],
            [0.0, 0.5, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ],
        4,
    ),
}

SCHEMES = tuple(_TABLEAUS)


def tableau(name: str) -> ButcherTableau:
    try:
        return _TABLEAUS[name]
    except KeyError:
        raise ValueError(
            f"unknown scheme {name!r}; choose from {', '.join(SCHEMES)}"
        ) from None


@dataclass(frozen=True)
class StepSpec:
    """Everything a step needs besides the data: scheme, slope, interpolation."""

    tableau: ButcherTableau
    formulation: str = "stationary"
    interpolation: str = "constant"
    mu_delta: float = 1.0  # mean training step size, in data time units

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if not self.mu_delta > 0:
            raise ValueError("mu_delta must be positive")


def slope(formulation: str, cell_fn, x, h, spec: StepSpec, epsilon: float = 1.0,
          scaled_incremental: bool = False):
    """The slope F(x, h) for the configured formulation.

    ``x`` must already be embedded.  ``epsilon`` is the ASRNN scaling
    factor (1 for the GRU).  ``scaled_incremental`` selects the ASRNN's
    non-stationary form eps * f / mu_delta; without it the
    non-stationary slope is the raw cell output (the GRU baseline).
    The ignore-time formulation shares the stationary slope; the time
    substitution happens in the caller.
    """
    f = cell_fn(x, h)
    inv_mu = 1.0 / spec.mu_delta
    if formulation in ("stationary", "ignore-time"):
        if epsilon != 1.0:
            f = scale(f, epsilon)
        return scale(sub(f, h), inv_mu)
    if formulation == "non-stationary":
        if scaled_incremental:
            return scale(f, epsilon * inv_mu)
        return f
    raise ValueError(f"unknown formulation {formulation!r}")


def interpolate_input(x_n, x_next, c_i: float, mode: str):
    """Raw input at stage time t_n + c_i * delta_n, c_i in [0, 1]."""
    if mode == "constant" or c_i == 0.0:
        return x_n
    if mode == "linear":
        return (1.0 - c_i) * x_n + c_i * x_next
    raise ValueError(f"unknown interpolation mode {mode!r}")


def _times_delta(t, delta):
    """t * delta for a scalar delta or a per-row (B, 1) array."""
    if np.isscalar(delta):
        return scale(t, float(delta))
    return mul_const(t, delta)


def _delta_positive(delta) -> bool:
    if np.isscalar(delta):
        return delta > 0
    return bool(np.all(np.asarray(delta) > 0))


def rk_step(
    spec: StepSpec,
    cell_fn,
    embed_fn,
    x_raw_n,
    x_raw_next,
    delta_n,
    h_n,
    epsilon: float = 1.0,
    scaled_incremental: bool = False,
    slope_fn=None,
):
    """One explicit Runge-Kutta step of dh/dt = F(x, h) over delta_n.

    Stage slopes are found recursively: stage i sees the input
    interpolated at c_i (then embedded) and the state
    h_n + delta_n * sum_j a[i][j] k_j.  The new state is
    h_n + delta_n * sum_i b_i k_i.

    Works on single vectors or batches of rows (delta_n then being a
    scalar or a (B, 1) column).  ``slope_fn(x, h)``, when given,
    replaces the cell-based slope entirely; this is the hook the
    integration-order checks use.
    """
    if not _delta_positive(delta_n):
        raise ValueError("delta_n must be positive")
    tb = spec.tableau
    ks = []
    for i in range(tb.stages):
        x_i = interpolate_input(x_raw_n, x_raw_next, float(tb.c[i]), spec.interpolation)
        x_i = embed_fn(x_i)
        if i == 0:
            h_i = h_n
        else:
            acc = None
            for j in range(i):
                aij = float(tb.a[i][j])
                if aij == 0.0:
                    continue
                term = ks[j] if aij == 1.0 else scale(ks[j], aij)
                acc = term if acc is None else add(acc, term)
            h_i = h_n if acc is None else add(h_n, _times_delta(acc, delta_n))
        if slope_fn is not None:
            ks.append(slope_fn(x_i, h_i))
        else:
            ks.append(slope(spec.formulation, cell_fn, x_i, h_i, spec,
                            epsilon=epsilon, scaled_incremental=scaled_incremental))
    acc = None
    for i in range(tb.stages):
        bi = float(tb.b[i])
        if bi == 0.0:
            continue
        term = ks[i] if bi == 1.0 else scale(ks[i], bi)
        acc = term if acc is None else add(acc, term)
    return add(h_n, _times_delta(acc, delta_n))


def convergence_order(scheme: str, deltas=(0.2, 0.1, 0.05, 0.025)) -> float:
    """Fitted global-error order of a scheme on dh/dt = -h over [0, 1].

    Integrates from h(0) = 1 with uniform steps and fits the log-log
    slope of |h(1) - exp(-1)| against the step size.
    """
    spec = StepSpec(tableau=tableau(scheme), mu_delta=1.0)
    errs = []
    for delta in deltas:
        n = round(1.0 / delta)
        h = np.array([1.0])
        for _ in range(n):
            h = rk_step(
                spec, None, lambda x: x, h, h, delta, h,
                slope_fn=lambda x, hh: scale(hh, -1.0),
            )
        errs.append(abs(float(h[0]) - np.exp(-1.0)))
    fit = np.polyfit(np.log(np.asarray(deltas)), np.log(np.asarray(errs)), 1)
    return float(fit[0])


def order_condition_residuals(tb: ButcherTableau) -> dict:
    """Residuals of the classical order conditions, for verification."""
    res = {"sum_b": float(tb.b.sum() - 1.0)}
    res["consistency"] = float(np.max(np.abs(tb.a.sum(axis=1) - tb.c)))
    res["strictly_lower"] = float(np.max(np.abs(np.triu(tb.a))))
    if tb.order >= 2:
        res["b_c"] = float(tb.b @ tb.c - 0.5)
    if tb.order >= 3:
        res["b_c2"] = float(tb.b @ tb.c**2 - 1.0 / 3.0)
        res["b_a_c"] = float(tb.b @ (tb.a @ tb.c) - 1.0 / 6.0)
    return res
