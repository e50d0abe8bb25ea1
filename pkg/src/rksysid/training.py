"""Truncated backprop-through-time over segment minibatches.

Training follows the stateful scheme: before the first epoch and after
every epoch, one forward pass over the full training sequence records
the state arriving at each segment start; those states seed the next
epoch's segments and never carry gradient.  Only the segment starting
at index 0 reaches the trainable initial state.  Targets are the
next-step outputs, the loss is the mean squared error in normalized
output space, and optimization is plain bias-corrected Adam.  Early
stopping watches the validation RRSE computed by full rollout after
each epoch and keeps the best parameters seen.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields as dataclass_fields

import numpy as np

from .cells import ModelParams, bind_model, clone_model, init_params, named_arrays
from .data import Dataset, SegmentIndex, augment_delta_channel, make_segments
from .evaluation import rollout_states, rrse
from .integrators import (
    FORMULATIONS,
    INTERPOLATIONS,
    SCHEMES,
    StepSpec,
    rk_step,
    tableau,
)
from .tape import Tape, hadamard, place_row, scale, sub, vsum
from .cells import asrnn_cell, embed_input, gru_cell, output_map

__all__ = [
    "ConfigError",
    "TrainingDiverged",
    "TrainConfig",
    "TrainHistory",
    "AdamState",
    "parse_config",
    "config_to_text",
    "config_digest",
    "adam_update",
    "forward_segment",
    "refresh_segment_states",
    "train",
    "step_spec_for",
    "history_to_text",
]


class ConfigError(ValueError):
    """Invalid or unknown configuration keys/values."""


class TrainingDiverged(RuntimeError):
    """The training loss became non-finite; the run is void."""


@dataclass
class TrainConfig:
    """One training run, fully determined (together with the data file)."""

    dataset: str = ""  # canonical CSV path
    cell: str = "gru"
    scheme: str = "euler"
    formulation: str = "stationary"
    interpolation: str = "constant"
    k: int = 20
    batch_size: int = 512
    lr: float = 0.001
    L: int = 20
    stride: int = 1
    seed: int = 0
    max_epochs: int = 2000
    patience: int = 100
    gamma: float = 1.0
    epsilon: float = 1.0
    delta_channel: bool = False
    p_missing: float = 0.0  # provenance of the prepared CSV

    def validate(self):
        if self.cell not in ("gru", "asrnn"):
            raise ConfigError(f"unknown cell {self.cell!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.formulation not in FORMULATIONS:
            raise ConfigError(f"unknown formulation {self.formulation!r}")
        if self.interpolation not in INTERPOLATIONS:
            raise ConfigError(f"unknown interpolation {self.interpolation!r}")
        for name in ("k", "batch_size", "L", "stride", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.patience < 0:
            raise ConfigError("patience must be non-negative")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if not 0.0 <= self.p_missing < 1.0:
            raise ConfigError("p_missing must be in [0, 1)")
        return self


_CONFIG_TYPES = {f.name: f.type for f in dataclass_fields(TrainConfig)}
_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False}


def parse_config(text: str) -> TrainConfig:
    """Parse the flat ``key = value`` configuration format.

    Blank lines and lines starting with '#' are skipped.  Unknown keys
    are rejected (all of them are reported at once).
    """
    values = {}
    unknown = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _CONFIG_TYPES:
            unknown.append(key)
            continue
        kind = _CONFIG_TYPES[key]
        try:
            if kind == "bool":
                value = _BOOL_VALUES[raw.lower()]
            elif kind == "int":
                value = int(raw)
            elif kind == "float":
                value = float(raw)
            else:
                value = raw
        except (ValueError, KeyError):
            raise ConfigError(f"line {lineno}: bad value {raw!r} for {key}") from None
        values[key] = value
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return TrainConfig(**values).validate()


def config_to_text(config: TrainConfig) -> str:
    lines = []
    for f in dataclass_fields(TrainConfig):
        value = getattr(config, f.name)
        if f.type == "bool":
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_digest(config: TrainConfig) -> str:
    return hashlib.sha256(config_to_text(config).encode()).hexdigest()[:16]


def step_spec_for(config: TrainConfig, dataset: Dataset) -> StepSpec:
    return StepSpec(
        tableau=tableau(config.scheme),
        formulation=config.formulation,
        interpolation=config.interpolation,
        mu_delta=dataset.mu_delta,
    )


# ----------------------------------------------------------------------
# Adam.


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter path."""

    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: ModelParams) -> "AdamState":
        m = {path: np.zeros_like(arr) for path, arr in named_arrays(model)}
        v = {path: np.zeros_like(arr) for path, arr in named_arrays(model)}
        return cls(m=m, v=v)


def adam_update(params: dict, grads: dict, state: AdamState, lr: float) -> dict:
    """One bias-corrected Adam step, updating ``params`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for path, p in params.items():
        g = grads[path]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} ({path})")
        m = state.m[path]
        v = state.v[path]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


# ----------------------------------------------------------------------
# Forward passes.


def _model_fns(model):
    """Cell/embed closures (tape or plain arrays, depending on params).

    Returns (cell_fn, embed_fn, epsilon, scaled_incremental); only the
    ASRNN scales its incremental (non-stationary) slope by eps/mu.
    """
    if model.cell_kind == "gru":
        cell_fn = lambda x, h: gru_cell(x, h, model.cell)
        eps = 1.0
        scaled = False
    else:
        cell_fn = lambda x, h: asrnn_cell(x, h, model.cell)
        eps = model.cell.epsilon
        scaled = True
    embed_fn = lambda x_raw: embed_input(x_raw, model.embed)
    return cell_fn, embed_fn, eps, scaled


def forward_segment(model: ModelParams, dataset: Dataset, spec: StepSpec,
                    start: int, length: int, h_init):
    """Roll one training window; returns (predictions, final state).

    Steps n = start .. start+length-1 each consume (x_n, x_{n+1},
    delta_n) and emit the prediction paired with target y_{n+1}.
    """
    if start < 0 or start + length > dataset.train_end:
        raise ValueError(
            f"window [{start}, {start + length}] overflows the training range "
            f"[0, {dataset.train_end}]"
        )
    t = dataset.series.t
    x = dataset.series.x
    cell_fn, embed_fn, eps, scaled = _model_fns(model)
    h = np.asarray(h_init, dtype=np.float64)
    preds = np.empty((length, model.k_out))
    for n in range(start, start + length):
        delta = dataset.mu_delta if spec.formulation == "ignore-time" else t[n + 1] - t[n]
        h = rk_step(spec, cell_fn, embed_fn, x[n], x[n + 1], delta, h,
                    epsilon=eps, scaled_incremental=scaled)
        preds[n - start] = output_map(h, model.out)
    return preds, h


def refresh_segment_states(model: ModelParams, dataset: Dataset,
                           segments: SegmentIndex, spec: StepSpec) -> np.ndarray:
    """Initial state per segment from one pass over the training range.

    The returned array is detached data: gradients never flow through
    it.  Slot i belongs to the segment starting at ``segments.starts[i]``.
    """
    n_steps = max(int(segments.starts.max()), 1)
    states, _ = rollout_states(model, dataset, spec, n_steps=n_steps)
    return states[segments.starts].copy()


def _batch_loss(tape: Tape, model_bound, dataset: Dataset, spec: StepSpec,
                starts: np.ndarray, length: int, h_init: np.ndarray,
                h0_leaf):
    """Mean squared error of a batch of segments, as a tape scalar."""
    t = dataset.series.t
    x = dataset.series.x
    y = dataset.series.y
    cell_fn, embed_fn, eps, scaled = _model_fns(model_bound)
    zero_rows = np.nonzero(starts == 0)[0]
    if zero_rows.size:
        h = place_row(h_init, int(zero_rows[0]), h0_leaf)
    else:
        h = tape.constant(h_init)
    total = None
    for n_off in range(length):
        rows = starts + n_off
        if spec.formulation == "ignore-time":
            delta = np.full((len(starts), 1), spec.mu_delta)
        else:
            delta = (t[rows + 1] - t[rows]).reshape(-1, 1)
        h = rk_step(spec, cell_fn, embed_fn, x[rows], x[rows + 1], delta, h,
                    epsilon=eps, scaled_incremental=scaled)
        diff = sub(output_map(h, model_bound.out), y[rows + 1])
        sq = vsum(hadamard(diff, diff))
        total = sq if total is None else total + sq
    scale_factor = 1.0 / (len(starts) * length * y.shape[1])
    return scale(total, scale_factor)


# ----------------------------------------------------------------------
# The training loop.


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)  # one entry per epoch
    val_rrse: list = field(default_factory=list)  # percent, per epoch
    best_epoch: int = 0  # 1-based
    best_val_rrse: float = float("inf")
    epochs_run: int = 0
    stopping_reason: str = ""


def history_to_text(history: TrainHistory) -> str:
    lines = [
        f"epochs_run = {history.epochs_run}",
        f"best_epoch = {history.best_epoch}",
        f"best_val_rrse = {history.best_val_rrse!r}",
        f"stopping_reason = {history.stopping_reason}",
        "epoch,train_loss,val_rrse",
    ]
    for i, (loss, val) in enumerate(zip(history.train_loss, history.val_rrse), start=1):
        lines.append(f"{i},{loss!r},{val!r}")
    return "\n".join(lines) + "\n"


def _shuffled_batches(rng, n: int, batch_size: int):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


# Unit-root (non-stationary) runs can reach astronomically large states
# and hence gradients whose squares overflow Adam's second moment, which
# would freeze training permanently.  Gradients are therefore rescaled
# to this global norm when they exceed it; healthy runs sit orders of
# magnitude below and pass through bit-identically.
GRAD_CLIP_NORM = 1e3


def _clip_gradients(grad_map: dict) -> dict:
    biggest = max((float(np.max(np.abs(g))) if g.size else 0.0)
                  for g in grad_map.values())
    if biggest == 0.0:
        return grad_map
    # norm computed in a pre-scaled space so squares cannot overflow
    sq = sum(float(np.sum((g / biggest) ** 2)) for g in grad_map.values())
    norm = biggest * np.sqrt(sq)
    if norm <= GRAD_CLIP_NORM:
        return grad_map
    factor = GRAD_CLIP_NORM / norm
    return {path: g * factor for path, g in grad_map.items()}


def train(dataset: Dataset, config: TrainConfig):
    """Train one model; returns (best ModelParams, TrainHistory).

    Deterministic for a fixed config and dataset: the parameter draw,
    the segment shuffles, everything downstream of the seed is
    reproducible bit for bit on one machine.
    """
    config.validate()
    if config.delta_channel and not dataset.delta_channel:
        dataset = augment_delta_channel(dataset)
    spec = step_spec_for(config, dataset)
    segments = make_segments(dataset, config.L, config.stride)
    model = init_params(
        config.seed,
        k_x_raw=dataset.k_x_raw,
        k=config.k,
        k_out=dataset.k_out,
        cell_kind=config.cell,
        gamma=config.gamma,
        epsilon=config.epsilon,
    )
    adam = AdamState.for_model(model)
    params = dict(named_arrays(model))
    shuffle_rng = np.random.default_rng([config.seed, 0x5E9])
    history = TrainHistory()
    best_model = clone_model(model)
    since_best = 0

    seg_states = refresh_segment_states(model, dataset, segments, spec)
    n_val_steps = dataset.val_end - 1

    for epoch in range(1, config.max_epochs + 1):
        epoch_sq_sum = 0.0
        for batch in _shuffled_batches(shuffle_rng, len(segments.starts), config.batch_size):
            starts = segments.starts[batch]
            tape = Tape()
            bound, leaves = bind_model(tape, model)
            h0_leaf = dict(leaves)["h0"]
            with np.errstate(over="ignore", invalid="ignore"):
                loss = _batch_loss(
                    tape, bound, dataset, spec, starts, segments.length,
                    seg_states[batch], h0_leaf,
                )
                loss_value = float(loss.value)
                if not np.isfinite(loss_value):
                    raise TrainingDiverged(
                        f"non-finite training loss at epoch {epoch} "
                        f"(seed {config.seed}, scheme {config.scheme}, "
                        f"formulation {config.formulation})"
                    )
                grads = tape.backward(loss, [leaf for _, leaf in leaves])
            grad_map = {path: g for (path, _), g in zip(leaves, grads)}
            if not all(np.all(np.isfinite(g)) for g in grad_map.values()):
                raise TrainingDiverged(
                    f"non-finite gradients at epoch {epoch} (seed {config.seed})"
                )
            adam_update(params, _clip_gradients(grad_map), adam, config.lr)
            epoch_sq_sum += loss_value * len(starts)
        history.train_loss.append(epoch_sq_sum / len(segments.starts))

        # One pass covering training and validation: segment states for
        # the next epoch plus the validation predictions.
        states, preds = rollout_states(model, dataset, spec, n_steps=n_val_steps)
        seg_states = states[segments.starts].copy()
        val_slice = preds[dataset.train_end - 1:dataset.val_end - 1]
        val_targets = dataset.series.y[dataset.train_end:dataset.val_end]
        if np.all(np.isfinite(val_slice)):
            val = rrse(val_slice, val_targets, split="val").mean
        else:
            val = float("inf")
        history.val_rrse.append(val)
        history.epochs_run = epoch

        if val < history.best_val_rrse:
            history.best_val_rrse = val
            history.best_epoch = epoch
            best_model = clone_model(model)
            since_best = 0
        else:
            since_best += 1
            if since_best > config.patience:
                history.stopping_reason = "patience"
                break
    else:
        history.stopping_reason = "max_epochs"

    best_model.meta = {
        "config_digest": config_digest(config),
        "norm_digest": dataset.norm_digest(),
        "scheme": config.scheme,
        "formulation": config.formulation,
        "interpolation": config.interpolation,
        "delta_channel": dataset.delta_channel,
        "mu_delta": dataset.mu_delta,
        "seed": config.seed,
        "epochs_run": history.epochs_run,
        "best_epoch": history.best_epoch,
        "norm": {
            "x_mean": dataset.stats.x_mean.tolist(),
            "x_std": dataset.stats.x_std.tolist(),
            "y_mean": dataset.stats.y_mean.tolist(),
            "y_std": dataset.stats.y_std.tolist(),
        },
    }
    return best_model, history
