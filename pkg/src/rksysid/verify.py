"""Self-checks: finite-difference gradient sweeps and integration orders.

These run from a fresh install with no data.  The gradient sweep covers
both cells, the embedding and the output map individually, then short
rollouts for every scheme and slope formulation, all against the
central-difference oracle.  The order sweep fits the global-error slope
of each scheme on dh/dt = -h, which must land near the tableau's
nominal order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import (
    AsrnnParams,
    EmbedParams,
    GruParams,
    OutputParams,
    asrnn_cell,
    embed_input,
    gru_cell,
    output_map,
)
from .integrators import SCHEMES, StepSpec, convergence_order, rk_step, tableau
from .tape import check_gradients, hadamard, scale, vsum

__all__ = ["CheckResult", "gradcheck_suite", "ordercheck_suite", "GRAD_TOL", "ORDER_TOL"]

GRAD_TOL = 1e-4
ORDER_TOL = 0.25


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float
    ok: bool


def _result(name, value, tol):
    return CheckResult(name=name, value=float(value), tol=tol, ok=bool(value <= tol))


# Loss values are kept small (mean of squares, further scaled down):
# with a step of 1e-5, the oracle's cancellation noise is about
# 5.5e-12 * |loss|, and it must stay below GRAD_TOL even against the
# 1e-8 denominator floor, which structurally-zero gradient components
# hit (e.g. the diagonal of the antisymmetric generator).
def _sq_mean(out, scale_down: float = 0.0625):
    n = out.value.size
    return scale(vsum(hadamard(out, out)), scale_down / n)


def _gru_leaves(rng, k, kx):
    s = 0.4
    return [
        rng.normal(size=(k, kx)) * s, rng.normal(size=(k, kx)) * s,
        rng.normal(size=(k, kx)) * s,
        rng.normal(size=(k, k)) * s, rng.normal(size=(k, k)) * s,
        rng.normal(size=(k, k)) * s,
        rng.normal(size=k) * s, rng.normal(size=k) * s, rng.normal(size=k) * s,
        rng.normal(size=kx) * 0.6,  # x
        rng.normal(size=k) * 0.6,  # h
    ]


def _asrnn_leaves(rng, k, kx):
    s = 0.4
    return [
        rng.normal(size=(k, kx)) * s, rng.normal(size=(k, kx)) * s,
        rng.normal(size=(k, k)) * s,
        rng.normal(size=k) * s, rng.normal(size=k) * s,
        rng.normal(size=kx) * 0.6,
        rng.normal(size=k) * 0.6,
    ]


def _cell_check(cell_kind: str, draws: int, rng) -> float:
    k, kx = 3, 3
    worst = 0.0
    for _ in range(draws):
        if cell_kind == "gru":
            leaves = _gru_leaves(rng, k, kx)

            def build(tape, ls):
                p = GruParams(w_h=ls[0], w_z=ls[1], w_r=ls[2], u_h=ls[3],
                              u_z=ls[4], u_r=ls[5], b_h=ls[6], b_z=ls[7], b_r=ls[8])
                return _sq_mean(gru_cell(ls[9], ls[10], p))

        else:
            leaves = _asrnn_leaves(rng, k, kx)

            def build(tape, ls):
                p = AsrnnParams(w_h=ls[0], w_z=ls[1], m=ls[2], b_h=ls[3],
                                b_z=ls[4], gamma=0.3, epsilon=0.8)
                return _sq_mean(asrnn_cell(ls[5], ls[6], p))

        worst = max(worst, check_gradients(build, leaves))
    return worst


def _embed_check(draws: int, rng) -> float:
    worst = 0.0
    for _ in range(draws):
        leaves = [rng.normal(size=(3, 2)) * 0.4, rng.normal(size=3) * 0.4,
                  rng.normal(size=2) * 0.6]

        def build(tape, ls):
            return _sq_mean(embed_input(ls[2], EmbedParams(w=ls[0], b=ls[1])))

        worst = max(worst, check_gradients(build, leaves))
    return worst


def _output_check(draws: int, rng) -> float:
    worst = 0.0
    for _ in range(draws):
        leaves = [rng.normal(size=(2, 3)) * 0.4, rng.normal(size=2) * 0.4,
                  rng.normal(size=3) * 0.6]

        def build(tape, ls):
            return _sq_mean(output_map(ls[2], OutputParams(w=ls[0], b=ls[1])))

        worst = max(worst, check_gradients(build, leaves))
    return worst


def rollout_gradcheck(cell_kind: str, scheme: str, formulation: str,
                      steps: int = 3, seed: int = 0, draws: int = 1) -> float:
    """Max relative gradient error through a short full-model rollout."""
    k, kx, ky = 3, 2, 2
    worst = 0.0
    for draw in range(draws):
        rng = np.random.default_rng(seed + 101 * draw)
        s = 0.4

        def m(rows, cols):
            return rng.normal(size=(rows, cols)) * s

        def vec(size):
            return rng.normal(size=size) * s

        arrays = [m(k, kx), vec(k)]  # embedding
        if cell_kind == "gru":
            arrays += [m(k, k) for _ in range(6)] + [vec(k) for _ in range(3)]
        else:
            arrays += [m(k, k), m(k, k), m(k, k), vec(k), vec(k)]
        arrays += [m(ky, k), vec(ky), vec(k)]  # output map, h0
        xs = rng.normal(size=(steps + 1, kx)) * 0.8
        deltas = rng.uniform(0.5, 1.5, size=steps)
        spec = StepSpec(tableau=tableau(scheme), formulation=formulation,
                        interpolation="linear", mu_delta=1.0)

        def build(tape, ls):
            embed = EmbedParams(w=ls[0], b=ls[1])
            if cell_kind == "gru":
                cell = GruParams(w_h=ls[2], w_z=ls[3], w_r=ls[4], u_h=ls[5],
                                 u_z=ls[6], u_r=ls[7], b_h=ls[8], b_z=ls[9],
                                 b_r=ls[10])
                eps = 1.0
                cell_fn = lambda x, h: gru_cell(x, h, cell)
                out_p = OutputParams(w=ls[11], b=ls[12])
                h = ls[13]
            else:
                cell = AsrnnParams(w_h=ls[2], w_z=ls[3], m=ls[4], b_h=ls[5],
                                   b_z=ls[6], gamma=0.3, epsilon=0.8)
                eps = 0.8
                cell_fn = lambda x, h: asrnn_cell(x, h, cell)
                out_p = OutputParams(w=ls[7], b=ls[8])
                h = ls[9]
            embed_fn = lambda x_raw: embed_input(x_raw, embed)
            total = None
            for n in range(steps):
                h = rk_step(spec, cell_fn, embed_fn, xs[n], xs[n + 1],
                            float(deltas[n]), h, epsilon=eps)
                pred = output_map(h, out_p)
                sq = vsum(hadamard(pred, pred))
                total = sq if total is None else total + sq
            return scale(total, 0.0625 / (steps * ky))

        worst = max(worst, check_gradients(build, arrays))
    return worst


def gradcheck_suite(cell_draws: int = 20, rollout_draws: int = 1) -> list:
    """The full gradient sweep; every entry must sit within GRAD_TOL."""
    rng = np.random.default_rng(12)
    results = [
        _result("grad embed_input", _embed_check(cell_draws, rng), GRAD_TOL),
        _result("grad output_map", _output_check(cell_draws, rng), GRAD_TOL),
        _result("grad gru_cell", _cell_check("gru", cell_draws, rng), GRAD_TOL),
        _result("grad asrnn_cell", _cell_check("asrnn", cell_draws, rng), GRAD_TOL),
    ]
    if rollout_draws > 0:
        for cell_kind in ("gru", "asrnn"):
            for scheme in SCHEMES:
                for formulation in ("stationary", "non-stationary"):
                    err = rollout_gradcheck(cell_kind, scheme, formulation,
                                            draws=rollout_draws)
                    results.append(_result(
                        f"grad rollout {cell_kind}/{scheme}/{formulation}",
                        err, GRAD_TOL,
                    ))
    return results


def ordercheck_suite() -> list:
    """Fitted convergence order per scheme, within ORDER_TOL of nominal."""
    results = []
    for scheme in SCHEMES:
        fitted = convergence_order(scheme)
        nominal = tableau(scheme).order
        results.append(_result(
            f"order {scheme} (fitted {fitted:.3f}, nominal {nominal})",
            abs(fitted - nominal), ORDER_TOL,
        ))
    return results
