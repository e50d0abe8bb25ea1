"""Reverse-mode automatic differentiation on dense float64 arrays.

A ``Tape`` records every primitive operation applied to its tensors in
topological order.  One reverse sweep over the record then yields the
gradient of a scalar with respect to every trainable leaf.  Each record
entry saves exactly the operand values its reverse rule needs, nothing
more (tanh, for instance, saves only its own output).

All values are float64.  Supported shapes are scalars, vectors and
matrices, plus a leading batch axis on vectors; there is no broadcasting
beyond the bias case (adding a vector to each row of a batch).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "Tape",
    "Tensor",
    "matvec",
    "linear",
    "linear_t",
    "add",
    "sub",
    "hadamard",
    "scale",
    "mul_const",
    "affine_combine",
    "tanh",
    "sigmoid",
    "vsum",
    "place_row",
    "elementwise",
    "finite_difference_gradient",
    "max_relative_error",
    "check_gradients",
]


class ShapeError(ValueError):
    """Operand shapes do not admit the requested operation."""


# Record entry kinds.
_LEAF = 0
_MATVEC = 1
_LINEAR = 2
_ADD = 3
_SUB = 4
_HADAMARD = 5
_SCALE = 6
_MULC = 7
_AFFINE = 8
_TANH = 9
_SIGMOID = 10
_SUM = 11
_PLACEROW = 12
_LINEAR_T = 13


def _as_array(x):
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A float64 array bound to a position in a tape's record."""

    __slots__ = ("tape", "idx", "value")

    def __init__(self, tape: "Tape", idx: int, value: np.ndarray):
        self.tape = tape
        self.idx = idx
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(idx={self.idx}, shape={self.value.shape})"

    # Arithmetic sugar.  The right operand may be a plain array or scalar,
    # which is treated as a constant (it receives no gradient).
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        if np.isscalar(other):
            return scale(self, float(other))
        return mul_const(self, _as_array(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)


class Tape:
    """Ordered record of primitive operations, replayable in reverse.

    A tape is owned by a single forward/backward pass; parameters are
    re-registered as leaves for each pass.  Entries are tuples
    ``(kind, parent indices, saved values)`` appended in execution order,
    so every entry's operands precede it.
    """

    def __init__(self):
        self._entries = []  # (kind, parents tuple, saved tuple)
        self._trainable = set()

    def __len__(self):
        return len(self._entries)

    def _record(self, kind, parents, saved, value) -> Tensor:
        self._entries.append((kind, parents, saved))
        return Tensor(self, len(self._entries) - 1, value)

    def leaf(self, value, trainable: bool = False) -> Tensor:
        """Register an input array; trainable leaves receive gradients."""
        t = self._record(_LEAF, (), (), _as_array(value))
        if trainable:
            self._trainable.add(t.idx)
        return t

    def constant(self, value) -> Tensor:
        return self.leaf(value, trainable=False)

    # ------------------------------------------------------------------
    def backward(self, loss: Tensor, wrt, accumulation_order: str = "record"):
        """Gradients of a scalar ``loss`` for each tensor in ``wrt``.

        One sweep visits each record entry at most once, in reverse
        record order.  ``accumulation_order`` selects the order in which
        contributions to a shared operand are summed ("record" or
        "reversed"); the results agree up to float associativity.

        Leaves in ``wrt`` that are not on any path to the loss receive a
        zero gradient.
        """
        if loss.tape is not self:
            raise ValueError("loss does not belong to this tape")
        if loss.value.shape != ():
            raise ShapeError(
                f"backward requires a scalar loss, got shape {loss.value.shape}"
            )
        entries = self._entries
        n = len(entries)
        # Contributions per node; summed lazily so the accumulation order
        # can be controlled.
        contribs = [None] * n
        contribs[loss.idx] = [np.ones(())]
        self.last_backward_visits = 0

        def grad_of(i):
            c = contribs[i]
            if c is None:
                return None
            if len(c) == 1:
                return c[0]
            if accumulation_order == "reversed":
                c = c[::-1]
            total = c[0]
            for extra in c[1:]:
                total = total + extra
            return total

        def send(i, g):
            if contribs[i] is None:
                contribs[i] = [g]
            else:
                contribs[i].append(g)

        for i in range(n - 1, -1, -1):
            g = grad_of(i)
            if g is None:
                continue
            contribs[i] = [g]  # freeze the summed value
            kind, parents, saved = entries[i]
            self.last_backward_visits += 1
            if kind == _LEAF:
                continue
            if kind == _MATVEC:
                w, v = saved
                send(parents[0], np.outer(g, v))
                send(parents[1], w.T @ g)
            elif kind == _LINEAR:
                x, w = saved
                send(parents[0], g @ w)
                if x.ndim == 1:
                    send(parents[1], np.outer(g, x))
                else:
                    send(parents[1], g.T @ x)
            elif kind == _ADD:
                send(parents[0], g)
                send(parents[1], _unbroadcast(g, saved[0]))
            elif kind == _SUB:
                send(parents[0], g)
                send(parents[1], _unbroadcast(-g, saved[0]))
            elif kind == _HADAMARD:
                a, b = saved
                send(parents[0], g * b)
                send(parents[1], g * a)
            elif kind == _SCALE:
                send(parents[0], g * saved[0])
            elif kind == _MULC:
                send(parents[0], g * saved[0])
            elif kind == _AFFINE:
                alpha, beta = saved
                send(parents[0], g * alpha)
                send(parents[1], g * beta)
            elif kind == _TANH:
                out = saved[0]
                send(parents[0], g * (1.0 - out * out))
            elif kind == _SIGMOID:
                out = saved[0]
                send(parents[0], g * (out * (1.0 - out)))
            elif kind == _LINEAR_T:
                x, w = saved
                send(parents[0], g @ w.T)
                if x.ndim == 1:
                    send(parents[1], np.outer(x, g))
                else:
                    send(parents[1], x.T @ g)
            elif kind == _SUM:
                send(parents[0], np.broadcast_to(g, saved[0]))
            elif kind == _PLACEROW:
                send(parents[0], g[saved[0]])
            else:  # pragma: no cover
                raise AssertionError(f"unknown op kind {kind}")

        grads = []
        for t in wrt:
            if t.tape is not self:
                raise ValueError("wrt tensor does not belong to this tape")
            g = grad_of(t.idx)
            if g is None:
                g = np.zeros_like(t.value)
            grads.append(np.asarray(g, dtype=np.float64).reshape(t.value.shape))
        return grads


def _unbroadcast(g, target_shape):
    """Sum ``g`` down to ``target_shape`` (bias-style leading broadcast)."""
    while g.ndim > len(target_shape):
        g = g.sum(axis=0)
    return g


def _tape_of(*tensors):
    for t in tensors:
        if isinstance(t, Tensor):
            return t.tape
    return None


def _lift(tape, x):
    if isinstance(x, Tensor):
        return x
    return tape.constant(x)


# ----------------------------------------------------------------------
# Primitives.  Each accepts plain arrays as well; with no Tensor operand
# the result is a plain ndarray and nothing is recorded.


def matvec(w, v):
    """Matrix-vector product ``w @ v`` for a 2-d ``w`` and 1-d ``v``."""
    wv = w.value if isinstance(w, Tensor) else _as_array(w)
    vv = v.value if isinstance(v, Tensor) else _as_array(v)
    if wv.ndim != 2 or vv.ndim != 1 or wv.shape[1] != vv.shape[0]:
        raise ShapeError(f"matvec needs (m,n) @ (n,), got {wv.shape} @ {vv.shape}")
    out = wv @ vv
    tape = _tape_of(w, v)
    if tape is None:
        return out
    w, v = _lift(tape, w), _lift(tape, v)
    return tape._record(_MATVEC, (w.idx, v.idx), (wv, vv), out)


def linear(x, w):
    """Row-wise affine map ``x @ w.T`` for ``x`` of shape (n,) or (B, n)."""
    xv = x.value if isinstance(x, Tensor) else _as_array(x)
    wv = w.value if isinstance(w, Tensor) else _as_array(w)
    if wv.ndim != 2 or xv.ndim not in (1, 2) or xv.shape[-1] != wv.shape[1]:
        raise ShapeError(f"linear needs (...,n) @ (m,n).T, got {xv.shape}, {wv.shape}")
    out = xv @ wv.T
    tape = _tape_of(x, w)
    if tape is None:
        return out
    x, w = _lift(tape, x), _lift(tape, w)
    return tape._record(_LINEAR, (x.idx, w.idx), (xv, wv), out)


def linear_t(x, w):
    """Row-wise product with the transpose: ``x @ w``, i.e. rows times w.T.T."""
    xv = x.value if isinstance(x, Tensor) else _as_array(x)
    wv = w.value if isinstance(w, Tensor) else _as_array(w)
    if wv.ndim != 2 or xv.ndim not in (1, 2) or xv.shape[-1] != wv.shape[0]:
        raise ShapeError(f"linear_t needs (...,m) @ (m,n), got {xv.shape}, {wv.shape}")
    out = xv @ wv
    tape = _tape_of(x, w)
    if tape is None:
        return out
    x, w = _lift(tape, x), _lift(tape, w)
    return tape._record(_LINEAR_T, (x.idx, w.idx), (xv, wv), out)


def _check_same_or_bias(av, bv, opname):
    if av.shape == bv.shape:
        return
    # bias case: b has the trailing shape of a
    if av.ndim > bv.ndim and av.shape[av.ndim - bv.ndim:] == bv.shape:
        return
    raise ShapeError(f"{opname}: incompatible shapes {av.shape} and {bv.shape}")


def add(a, b):
    av = a.value if isinstance(a, Tensor) else _as_array(a)
    bv = b.value if isinstance(b, Tensor) else _as_array(b)
    _check_same_or_bias(av, bv, "add")
    out = av + bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    a, b = _lift(tape, a), _lift(tape, b)
    return tape._record(_ADD, (a.idx, b.idx), (bv.shape,), out)


def sub(a, b):
    av = a.value if isinstance(a, Tensor) else _as_array(a)
    bv = b.value if isinstance(b, Tensor) else _as_array(b)
    _check_same_or_bias(av, bv, "sub")
    out = av - bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    a, b = _lift(tape, a), _lift(tape, b)
    return tape._record(_SUB, (a.idx, b.idx), (bv.shape,), out)


def hadamard(a, b):
    av = a.value if isinstance(a, Tensor) else _as_array(a)
    bv = b.value if isinstance(b, Tensor) else _as_array(b)
    if av.shape != bv.shape:
        raise ShapeError(f"hadamard: shapes differ, {av.shape} vs {bv.shape}")
    out = av * bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    a, b = _lift(tape, a), _lift(tape, b)
    return tape._record(_HADAMARD, (a.idx, b.idx), (av, bv), out)


def scale(a, s: float):
    s = float(s)
    av = a.value if isinstance(a, Tensor) else _as_array(a)
    out = av * s
    if not isinstance(a, Tensor):
        return out
    return a.tape._record(_SCALE, (a.idx,), (s,), out)


def mul_const(a, c):
    """Elementwise product with a constant array broadcast into ``a``."""
    cv = _as_array(c)
    av = a.value if isinstance(a, Tensor) else _as_array(a)
    out = av * cv
    if out.shape != av.shape:
        raise ShapeError(f"mul_const: {cv.shape} does not broadcast into {av.shape}")
    if not isinstance(a, Tensor):
        return out
    return a.tape._record(_MULC, (a.idx,), (cv,), out)


def affine_combine(a, b, alpha, beta):
    """``alpha*a + beta*b`` with constant coefficients (scalar or array)."""
    av = a.value if isinstance(a, Tensor) else _as_array(a)
    bv = b.value if isinstance(b, Tensor) else _as_array(b)
    if av.shape != bv.shape:
        raise ShapeError(f"affine_combine: shapes differ, {av.shape} vs {bv.shape}")
    alpha = alpha if np.isscalar(alpha) else _as_array(alpha)
    beta = beta if np.isscalar(beta) else _as_array(beta)
    out = alpha * av + beta * bv
    if out.shape != av.shape:
        raise ShapeError("affine_combine: coefficients change the operand shape")
    tape = _tape_of(a, b)
    if tape is None:
        return out
    a, b = _lift(tape, a), _lift(tape, b)
    return tape._record(_AFFINE, (a.idx, b.idx), (alpha, beta), out)


def tanh(a):
    av = a.value if isinstance(a, Tensor) else _as_array(a)
    out = np.tanh(av)
    if not isinstance(a, Tensor):
        return out
    return a.tape._record(_TANH, (a.idx,), (out,), out)


def _sigmoid_stable(u):
    # exp of a non-positive argument never overflows; the two branches
    # are algebraically the same function
    e = np.exp(-np.abs(u))
    return np.where(u >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a):
    av = a.value if isinstance(a, Tensor) else _as_array(a)
    out = _sigmoid_stable(av)
    if not isinstance(a, Tensor):
        return out
    return a.tape._record(_SIGMOID, (a.idx,), (out,), out)


def vsum(a):
    """Sum of all elements, as a scalar."""
    av = a.value if isinstance(a, Tensor) else _as_array(a)
    out = np.asarray(av.sum())
    if not isinstance(a, Tensor):
        return out
    return a.tape._record(_SUM, (a.idx,), (av.shape,), out)


def place_row(base, row: int, v):
    """Copy of constant matrix ``base`` with ``base[row]`` replaced by ``v``.

    Only ``v`` receives a gradient; the rest of the matrix is data.
    """
    if not isinstance(v, Tensor):
        raise TypeError("place_row expects a Tensor row")
    base = _as_array(base)
    if base.ndim != 2 or v.value.shape != (base.shape[1],):
        raise ShapeError(f"place_row: row {v.value.shape} into {base.shape}")
    out = base.copy()
    out[row] = v.value
    return v.tape._record(_PLACEROW, (v.idx,), (row,), out)


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "hadamard": hadamard,
    "scale": scale,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "affine-combine": affine_combine,
}


def elementwise(kind: str, *operands):
    """Dispatch by name over the componentwise operation family."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return fn(*operands)


# ----------------------------------------------------------------------
# Finite differences, the independent gradient oracle.


def finite_difference_gradient(f, params, step: float = 1e-5):
    """Central-difference gradient estimate of scalar ``f`` at ``params``.

    ``params`` is a list of arrays; ``f`` must accept such a list and
    return a float, and must not mutate its argument.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    grads = []
    work = [np.array(p, dtype=np.float64) for p in params]
    for i, p in enumerate(work):
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            fp = f(work)
            flat[j] = orig - step
            fm = f(work)
            flat[j] = orig
            gflat[j] = (fp - fm) / (2.0 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    """Componentwise |a - n| / max(|n|, floor), maximized over all params."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(n), floor)
        err = np.abs(a - n) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


def check_gradients(build, params, step: float = 1e-5, floor: float = 1e-8):
    """Compare tape gradients of ``build`` against central differences.

    ``build(tape, leaves)`` must return a scalar loss Tensor, where
    ``leaves`` are trainable leaves created from ``params``.  Returns the
    max relative error between the tape gradients and the finite
    difference oracle.
    """
    tape = Tape()
    leaves = [tape.leaf(p, trainable=True) for p in params]
    loss = build(tape, leaves)
    analytic = tape.backward(loss, leaves)

    def f(ps):
        t2 = Tape()
        ls = [t2.leaf(p, trainable=True) for p in ps]
        return float(build(t2, ls).value)

    numeric = finite_difference_gradient(f, params, step=step)
    return max_relative_error(analytic, numeric, floor=floor)
