"""Recurrent cell functions, input embedding, output map and parameters.

Two cells are provided.  The GRU follows the usual gated form.  The
antisymmetric RNN (ASRNN) builds its hidden-to-hidden matrix as
``A = M - M.T - gamma*I`` from a square generator ``M``, which keeps the
linearized dynamics stable; the original formulation reuses one symbol
for both the input map and the generator, which is ill-typed when the
input and state sizes differ, so the generator is a separate parameter
here.  Both cells accept single state vectors or a batch of rows, and
work on plain arrays as well as tape tensors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .tape import (
    ShapeError,
    Tape,
    Tensor,
    add,
    affine_combine,
    hadamard,
    linear,
    linear_t,
    scale,
    sigmoid,
    sub,
    tanh,
)

__all__ = [
    "EmbedParams",
    "GruParams",
    "AsrnnParams",
    "OutputParams",
    "ModelParams",
    "embed_input",
    "gru_cell",
    "asrnn_cell",
    "antisymmetric_matrix",
    "output_map",
    "init_params",
    "named_arrays",
    "bind_model",
    "clone_model",
    "save_model",
    "load_model",
    "MODEL_FORMAT",
]

MODEL_FORMAT = "rksysid-model/1"


@dataclass
class EmbedParams:
    w: np.ndarray  # (k, k_x_raw)
    b: np.ndarray  # (k,)


@dataclass
class GruParams:
    w_h: np.ndarray  # (k, k) input weights, candidate
    w_z: np.ndarray
    w_r: np.ndarray
    u_h: np.ndarray  # (k, k) recurrent weights
    u_z: np.ndarray
    u_r: np.ndarray
    b_h: np.ndarray  # (k,)
    b_z: np.ndarray
    b_r: np.ndarray


@dataclass
class AsrnnParams:
    w_h: np.ndarray  # (k, k) input weights
    w_z: np.ndarray
    m: np.ndarray  # (k, k) generator of the antisymmetric part
    b_h: np.ndarray  # (k,)
    b_z: np.ndarray
    gamma: float = 1.0  # diffusion, non-negative
    epsilon: float = 1.0  # slope scaling, positive


@dataclass
class OutputParams:
    w: np.ndarray  # (k_out, k)
    b: np.ndarray  # (k_out,)


@dataclass
class ModelParams:
    """All trainable state of one model, as plain float64 arrays."""

    embed: EmbedParams
    cell: GruParams | AsrnnParams
    out: OutputParams
    h0: np.ndarray  # (k,) trainable initial state
    meta: dict = field(default_factory=dict)

    @property
    def cell_kind(self) -> str:
        return "gru" if isinstance(self.cell, GruParams) else "asrnn"

    @property
    def k_x_raw(self) -> int:
        return self.embed.w.shape[1]

    @property
    def k(self) -> int:
        return self.embed.w.shape[0]

    @property
    def k_out(self) -> int:
        return self.out.w.shape[0]


_GRU_FIELDS = ("w_h", "w_z", "w_r", "u_h", "u_z", "u_r", "b_h", "b_z", "b_r")
_ASRNN_FIELDS = ("w_h", "w_z", "m", "b_h", "b_z")


def _cell_fields(cell) -> tuple[str, ...]:
    return _GRU_FIELDS if isinstance(cell, GruParams) else _ASRNN_FIELDS


def named_arrays(model: ModelParams):
    """Yield (path, array) for every trainable tensor, in a fixed order."""
    yield "embed.w", model.embed.w
    yield "embed.b", model.embed.b
    for name in _cell_fields(model.cell):
        yield f"cell.{name}", getattr(model.cell, name)
    yield "out.w", model.out.w
    yield "out.b", model.out.b
    yield "h0", model.h0


def bind_model(tape: Tape, model: ModelParams):
    """Register every parameter as a trainable leaf on ``tape``.

    Returns a ModelParams whose arrays are replaced by Tensors, plus the
    list of (path, leaf) pairs in ``named_arrays`` order.
    """
    leaves = [(path, tape.leaf(arr, trainable=True)) for path, arr in named_arrays(model)]
    by_path = dict(leaves)
    embed = EmbedParams(w=by_path["embed.w"], b=by_path["embed.b"])
    cell_kwargs = {name: by_path[f"cell.{name}"] for name in _cell_fields(model.cell)}
    if isinstance(model.cell, GruParams):
        cell = GruParams(**cell_kwargs)
    else:
        cell = AsrnnParams(
            **cell_kwargs, gamma=model.cell.gamma, epsilon=model.cell.epsilon
        )
    out = OutputParams(w=by_path["out.w"], b=by_path["out.b"])
    bound = ModelParams(embed=embed, cell=cell, out=out, h0=by_path["h0"], meta=model.meta)
    return bound, leaves


def clone_model(model: ModelParams) -> ModelParams:
    cell_kwargs = {n: getattr(model.cell, n).copy() for n in _cell_fields(model.cell)}
    if isinstance(model.cell, GruParams):
        cell = GruParams(**cell_kwargs)
    else:
        cell = AsrnnParams(**cell_kwargs, gamma=model.cell.gamma, epsilon=model.cell.epsilon)
    return ModelParams(
        embed=EmbedParams(w=model.embed.w.copy(), b=model.embed.b.copy()),
        cell=cell,
        out=OutputParams(w=model.out.w.copy(), b=model.out.b.copy()),
        h0=model.h0.copy(),
        meta=dict(model.meta),
    )


def _shape_of(x) -> tuple:
    return x.value.shape if isinstance(x, Tensor) else np.shape(x)


def embed_input(x_raw, p: EmbedParams):
    """Map raw inputs to the cell input space: tanh(W x + b)."""
    if _shape_of(x_raw)[-1] != _shape_of(p.w)[1]:
        raise ShapeError(
            f"embed_input: input {_shape_of(x_raw)} vs weights {_shape_of(p.w)}"
        )
    return tanh(add(linear(x_raw, p.w), p.b))


def gru_cell(x, h, p: GruParams):
    """One GRU application: (1 - z) * candidate + z * h."""
    if _shape_of(x)[-1] != _shape_of(p.w_z)[1] or _shape_of(h)[-1] != _shape_of(p.u_z)[1]:
        raise ShapeError(
            f"gru_cell: x {_shape_of(x)}, h {_shape_of(h)} vs "
            f"W {_shape_of(p.w_z)}, U {_shape_of(p.u_z)}"
        )
    z = sigmoid(add(add(linear(x, p.w_z), linear(h, p.u_z)), p.b_z))
    r = sigmoid(add(add(linear(x, p.w_r), linear(h, p.u_r)), p.b_r))
    cand = tanh(add(add(linear(x, p.w_h), linear(hadamard(r, h), p.u_h)), p.b_h))
    one_minus_z = add(scale(z, -1.0), 1.0)
    return add(hadamard(one_minus_z, cand), hadamard(z, h))


def asrnn_cell(x, h, p: AsrnnParams):
    """Gated antisymmetric cell: z * tanh(W x + A h + b), A = M - M.T - gamma I.

    The gate shares the A h pre-activation with the candidate.
    """
    if _shape_of(x)[-1] != _shape_of(p.w_z)[1] or _shape_of(h)[-1] != _shape_of(p.m)[1]:
        raise ShapeError(
            f"asrnn_cell: x {_shape_of(x)}, h {_shape_of(h)} vs "
            f"W {_shape_of(p.w_z)}, M {_shape_of(p.m)}"
        )
    # A h = M h - M.T h - gamma h, without materializing A
    ah = sub(linear(h, p.m), linear_t(h, p.m))
    if p.gamma != 0.0:
        ah = affine_combine(ah, h, 1.0, -p.gamma)
    z = sigmoid(add(add(linear(x, p.w_z), ah), p.b_z))
    cand = tanh(add(add(linear(x, p.w_h), ah), p.b_h))
    return hadamard(z, cand)


def antisymmetric_matrix(p: AsrnnParams) -> np.ndarray:
    """The effective hidden-to-hidden matrix A = M - M.T - gamma I."""
    m = p.m.value if isinstance(p.m, Tensor) else p.m
    return m - m.T - p.gamma * np.eye(m.shape[0])


def output_map(h, p: OutputParams):
    """Affine read-out of the state; no non-linearity."""
    if _shape_of(h)[-1] != _shape_of(p.w)[1]:
        raise ShapeError(f"output_map: h {_shape_of(h)} vs W {_shape_of(p.w)}")
    return add(linear(h, p.w), p.b)


def init_params(
    seed: int,
    k_x_raw: int,
    k: int,
    k_out: int,
    cell_kind: str = "gru",
    gamma: float = 1.0,
    epsilon: float = 1.0,
) -> ModelParams:
    """Seeded parameter draw.

    Matrices are uniform on (-1/sqrt(f), 1/sqrt(f)) with f the matrix's
    column count, biases start at zero, and the trainable initial state
    is uniform on (-0.1, 0.1).  The draw order is fixed (embedding, cell
    matrices, output map, initial state) so one seed always produces the
    same model.
    """
    if min(k_x_raw, k, k_out) <= 0:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)

    def mat(rows, cols):
        lim = 1.0 / np.sqrt(cols)
        return rng.uniform(-lim, lim, size=(rows, cols))

    embed = EmbedParams(w=mat(k, k_x_raw), b=np.zeros(k))
    if cell_kind == "gru":
        cell = GruParams(
            w_h=mat(k, k), w_z=mat(k, k), w_r=mat(k, k),
            u_h=mat(k, k), u_z=mat(k, k), u_r=mat(k, k),
            b_h=np.zeros(k), b_z=np.zeros(k), b_r=np.zeros(k),
        )
    elif cell_kind == "asrnn":
        if gamma < 0:
            raise ValueError("gamma must be non-negative")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        cell = AsrnnParams(
            w_h=mat(k, k), w_z=mat(k, k), m=mat(k, k),
            b_h=np.zeros(k), b_z=np.zeros(k),
            gamma=float(gamma), epsilon=float(epsilon),
        )
    else:
        raise ValueError(f"unknown cell kind {cell_kind!r}")
    out = OutputParams(w=mat(k_out, k), b=np.zeros(k_out))
    h0 = rng.uniform(-0.1, 0.1, size=k)
    return ModelParams(embed=embed, cell=cell, out=out, h0=h0)


# ----------------------------------------------------------------------
# Model file: one self-describing JSON document.  Floats are written with
# repr (shortest 64-bit round trip, at most 17 significant digits), so
# save/load reproduces every value bit-exactly.


def save_model(model: ModelParams, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "cell": model.cell_kind,
        "k_x_raw": model.k_x_raw,
        "k": model.k,
        "k_out": model.k_out,
    }
    if isinstance(model.cell, AsrnnParams):
        doc["gamma"] = model.cell.gamma
        doc["epsilon"] = model.cell.epsilon
    doc["meta"] = model.meta
    doc["params"] = {path_: arr.tolist() for path_, arr in named_arrays(model)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> ModelParams:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a model file (format={doc.get('format')!r})")
    params = {k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()}
    embed = EmbedParams(w=params["embed.w"], b=params["embed.b"])
    if doc["cell"] == "gru":
        cell = GruParams(**{n: params[f"cell.{n}"] for n in _GRU_FIELDS})
    else:
        cell = AsrnnParams(
            **{n: params[f"cell.{n}"] for n in _ASRNN_FIELDS},
            gamma=float(doc["gamma"]),
            epsilon=float(doc["epsilon"]),
        )
    out = OutputParams(w=params["out.w"], b=params["out.b"])
    return ModelParams(
        embed=embed, cell=cell, out=out, h0=params["h0"], meta=doc.get("meta", {})
    )
