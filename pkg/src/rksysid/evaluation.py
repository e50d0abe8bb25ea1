"""Full-sequence rollout, the relative error metric, and seed aggregation.

Evaluation always rolls the model through the entire sequence from the
trained initial state, so the validation and test ranges receive the
state that actually flows into them; restarting cold at a split
boundary would measure a different model.

The metric is the root relative squared error (RRSE), reported in
percent: per channel, the RMS prediction error normalized by the RMS
error of predicting that channel's mean.  100% therefore means "no
better than the mean predictor".  The denominator uses the ground-truth
spread around the target mean, which makes the metric invariant to
per-channel affine rescaling, so normalized-space evaluation equals
raw-space evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import GruParams, ModelParams
from .data import DataError, Dataset
from .integrators import StepSpec
from .tape import _sigmoid_stable

__all__ = [
    "EvalReport",
    "RunAggregate",
    "rollout",
    "rollout_states",
    "rrse",
    "evaluate_split",
    "aggregate",
    "format_metrics",
    "dump_predictions",
    "SPLITS",
]

SPLITS = ("train", "val", "test", "all")


@dataclass(frozen=True)
class EvalReport:
    split: str
    n: int  # number of evaluated prediction/target pairs
    per_channel: np.ndarray  # percent, one entry per output channel
    mean: float  # percent, arithmetic mean over channels


@dataclass(frozen=True)
class RunAggregate:
    """Mean and sample std of the mean-RRSE over completed seeds."""

    mean: float
    std: float | None  # None for a single completed run
    n: int
    seeds: tuple
    failures: int


# ----------------------------------------------------------------------
# Rollout engine.  Stage inputs depend only on the data, so their
# embeddings and input-side projections are precomputed in bulk; the
# sequential loop then touches only the state-dependent terms.


def _stage_projections(model: ModelParams, dataset: Dataset, spec: StepSpec, n_steps):
    x = dataset.series.x
    cell = model.cell
    gru = isinstance(cell, GruParams)
    projections = {}
    for c in sorted(set(float(v) for v in spec.tableau.c)):
        if c == 0.0 or spec.interpolation == "constant":
            raw = x[:n_steps]
        else:
            raw = (1.0 - c) * x[:n_steps] + c * x[1:n_steps + 1]
        emb = np.tanh(raw @ model.embed.w.T + model.embed.b)
        if gru:
            projections[c] = (emb @ cell.w_h.T, emb @ cell.w_z.T, emb @ cell.w_r.T)
        else:
            projections[c] = (emb @ cell.w_h.T, emb @ cell.w_z.T)
    return projections


def rollout_states(model: ModelParams, dataset: Dataset, spec: StepSpec,
                   n_steps: int | None = None):
    """States and predictions from stepping the model along the data.

    Returns ``(states, preds)``: ``states[n]`` is the hidden state on
    arrival at row n (``states[0]`` is the trained initial state) and
    ``preds[n]`` is the output read from ``states[n+1]``, i.e. the
    prediction paired with target row n+1.
    """
    t = dataset.series.t
    if n_steps is None:
        n_steps = len(t) - 1
    if not 1 <= n_steps <= len(t) - 1:
        raise ValueError(f"n_steps must be in [1, {len(t) - 1}], got {n_steps}")
    cell = model.cell
    gru = isinstance(cell, GruParams)
    eps = 1.0 if gru else cell.epsilon
    inv_mu = 1.0 / spec.mu_delta
    tb = spec.tableau
    stationary = spec.formulation in ("stationary", "ignore-time")
    deltas = np.diff(t[:n_steps + 1])
    if spec.formulation == "ignore-time":
        deltas = np.full_like(deltas, spec.mu_delta)
    proj = _stage_projections(model, dataset, spec, n_steps)
    if not gru:
        m_mat = cell.m
        gamma = cell.gamma

    # the expressions below mirror rk_step/slope term for term, so this
    # path and the recorded path agree to rounding
    def combine(coeffs, ks):
        acc = None
        for coeff, kv in zip(coeffs, ks):
            if coeff == 0.0:
                continue
            term = kv if coeff == 1.0 else coeff * kv
            acc = term if acc is None else acc + term
        return acc

    k = model.k
    states = np.empty((n_steps + 1, k))
    states[0] = model.h0
    h = model.h0.copy()
    cs = [float(c) for c in tb.c]
    # unit-root runs may saturate to inf; callers check finiteness
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            dn = deltas[n]
            ks = []
            for i in range(tb.stages):
                acc = combine(tb.a[i][:i], ks) if i else None
                hs = h if acc is None else h + dn * acc
                px = proj[cs[i]]
                if gru:
                    z = _sigmoid_stable((px[1][n] + hs @ cell.u_z.T) + cell.b_z)
                    r = _sigmoid_stable((px[2][n] + hs @ cell.u_r.T) + cell.b_r)
                    cand = np.tanh((px[0][n] + (r * hs) @ cell.u_h.T) + cell.b_h)
                    f = (-1.0 * z + 1.0) * cand + z * hs
                else:
                    ah = hs @ m_mat.T - hs @ m_mat
                    if gamma != 0.0:
                        ah = 1.0 * ah + (-gamma) * hs
                    z = _sigmoid_stable((px[1][n] + ah) + cell.b_z)
                    cand = np.tanh((px[0][n] + ah) + cell.b_h)
                    f = z * cand
                if stationary:
                    ks.append(((f * eps if eps != 1.0 else f) - hs) * inv_mu)
                elif gru:
                    ks.append(f)  # raw incremental slope, weighted by delta_n
                else:
                    ks.append(f * (eps * inv_mu))
            h = h + dn * combine(tb.b, ks)
            states[n + 1] = h
        preds = states[1:] @ model.out.w.T + model.out.b
    return states, preds


def rollout(model: ModelParams, dataset: Dataset, spec: StepSpec) -> np.ndarray:
    """Predictions over the full sequence, aligned to targets 1..N-1."""
    _, preds = rollout_states(model, dataset, spec)
    return preds


def rrse(predictions, targets, split: str = "all") -> EvalReport:
    """Root relative squared error in percent, per channel and averaged.

    The target mean is taken over the evaluated targets themselves.  A
    constant target channel has no spread to normalize by and is
    rejected.
    """
    predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if predictions.shape != targets.shape:
        raise ValueError(
            f"predictions {predictions.shape} and targets {targets.shape} differ"
        )
    if predictions.shape[0] < 2:
        raise ValueError("need at least two rows to evaluate")
    mu_y = targets.mean(axis=0)
    denom = ((targets - mu_y) ** 2).sum(axis=0)
    if np.any(denom == 0.0):
        ch = int(np.nonzero(denom == 0.0)[0][0])
        raise DataError(f"target channel {ch} is constant over the evaluated range")
    num = ((predictions - targets) ** 2).sum(axis=0)
    per_channel = 100.0 * np.sqrt(num / denom)
    return EvalReport(
        split=split,
        n=predictions.shape[0],
        per_channel=per_channel,
        mean=float(per_channel.mean()),
    )


def _split_target_range(dataset: Dataset, split: str):
    if split == "train":
        return 1, dataset.train_end
    if split == "val":
        return dataset.train_end, dataset.val_end
    if split == "test":
        return dataset.val_end, dataset.n
    if split == "all":
        return 1, dataset.n
    raise ValueError(f"unknown split {split!r}; choose from {SPLITS}")


def evaluate_split(model: ModelParams, dataset: Dataset, spec: StepSpec,
                   split: str = "test") -> EvalReport:
    """RRSE of a full rollout, restricted to one split's targets."""
    lo, hi = _split_target_range(dataset, split)
    preds = rollout(model, dataset, spec)
    report = rrse(preds[lo - 1:hi - 1], dataset.series.y[lo:hi], split=split)
    return report


def aggregate(mean_rrses, seeds=(), failures: int = 0) -> RunAggregate:
    """Mean and sample (n-1) std of per-seed mean RRSE values."""
    values = [float(v) for v in mean_rrses]
    if not values:
        raise ValueError("no completed runs to aggregate")
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) >= 2 else None
    return RunAggregate(
        mean=mean, std=std, n=len(values), seeds=tuple(seeds), failures=failures
    )


def format_metrics(report: EvalReport, **extra) -> str:
    """Flat machine-readable ``key = value`` document."""
    lines = []
    for key, value in extra.items():
        lines.append(f"{key} = {value}")
    lines.append(f"split = {report.split}")
    lines.append(f"n = {report.n}")
    for i, value in enumerate(report.per_channel, start=1):
        lines.append(f"rrse_channel_{i} = {value:.6f}")
    lines.append(f"rrse_mean = {report.mean:.6f}")
    return "\n".join(lines) + "\n"


def dump_predictions(path, t, y_true, y_pred) -> None:
    """CSV ``t,y_true_1..M,y_pred_1..M`` over the evaluated rows."""
    y_true = np.atleast_2d(y_true)
    y_pred = np.atleast_2d(y_pred)
    m = y_true.shape[1]
    header = ",".join(
        ["t"]
        + [f"y_true_{i + 1}" for i in range(m)]
        + [f"y_pred_{i + 1}" for i in range(m)]
    )
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(t)):
            row = [t[i], *y_true[i], *y_pred[i]]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
