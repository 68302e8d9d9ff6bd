"""Dense-tensor math with reverse-mode automatic differentiation.

Just enough for GRU stacks, additive attention, dual softmax layers and
elementwise gates: 2-D matmul, elementwise ops, row-wise softmax, concat,
reductions, embedding lookups. No general broadcasting; the only broadcast
allowed is adding a bias row to a matrix and scaling matrix rows by a
column of per-row scalars. Every op registers a backward rule on the
active Tape, and ``grad_check`` verifies any scalar function against
central finite differences.

GRU convention used throughout (update gate z, reset gate r, candidate c,
all gates with bias terms):

    r = sigmoid(x W_xr + h W_hr + b_r)
    z = sigmoid(x W_xz + h W_hz + b_z)
    c = tanh(x W_xn + (r * h) W_hn + b_n)
    h' = z * h + (1 - z) * c

so with all-zero parameters h' = 0.5 * h.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NonFiniteError

__all__ = [
    "Tensor", "Tape", "GruParams", "tensor", "zeros", "uniform",
    "matmul", "add", "sub", "mul", "affine", "scale_rows",
    "sigmoid", "tanh", "exp", "log", "sqrt", "softplus",
    "softmax", "log_softmax", "concat", "reduce_sum", "mean",
    "reshape", "repeat_rows", "embedding", "take_per_row",
    "gru_cell", "grad_check", "set_finite_checks",
]

_tls = threading.local()

# Cheap NaN/Inf guard on every op output; tests keep it on, training may
# disable it for speed (the train loop still checks the loss per batch).
_FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> None:
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


def _tape_stack() -> list:
    stack = getattr(_tls, "tapes", None)
    if stack is None:
        stack = []
        _tls.tapes = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense array plus optional participation in gradient recording."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of ops; reverse replay yields gradients for leaves.

    Ops append themselves in execution order, which is a valid topological
    order, so a single reversed pass propagates gradients correctly.
    """

    def __init__(self):
        self._entries: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, out: Tensor, backward: Callable[[np.ndarray], None]) -> None:
        self._entries.append((out, backward))

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss)=1 and propagate to every recorded leaf."""
        if loss.data.size != 1:
            raise ContractError("backward() needs a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for out, backward in reversed(self._entries):
            if out.grad is not None:
                backward(out.grad)


def _finalize(out_data: np.ndarray, parents: Sequence[Tensor],
              backward: Callable[[np.ndarray], None], name: str) -> Tensor:
    if _FINITE_CHECKS and not np.all(np.isfinite(out_data)):
        raise NonFiniteError(f"{name} produced a non-finite value")
    requires = any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=requires)
    if requires:
        tape = _active_tape()
        if tape is not None:
            tape.record(out, backward)
    return out


def tensor(data, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def uniform(rng: np.random.Generator, shape, scale: float = 0.08,
            requires_grad: bool = True, dtype=np.float32) -> Tensor:
    data = rng.uniform(-scale, scale, size=shape).astype(dtype)
    return Tensor(data, requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _finalize(out_data, (a, b), backward, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; b may also be a bias row (n,) or (1, n) against (m, n)."""
    bias_row = a.shape != b.shape
    if bias_row:
        ok = (a.data.ndim == 2
              and (b.shape == (a.shape[1],) or b.shape == (1, a.shape[1])))
        if not ok:
            raise DimensionError(f"add shapes {a.shape} + {b.shape}")
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            if bias_row:
                gb = g.sum(axis=0)
                b.accumulate_grad(gb.reshape(b.shape))
            else:
                b.accumulate_grad(g)

    return _finalize(out_data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub shapes {a.shape} - {b.shape}")
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    return _finalize(out_data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul shapes {a.shape} * {b.shape}")
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    return _finalize(out_data, (a, b), backward, "mul")


def affine(x: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """scale * x + shift with python-float constants."""
    out_data = x.data * scale + shift

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * scale)

    return _finalize(out_data, (x,), backward, "affine")


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Multiply each row of x (m, n) by the matching scalar in s (m, 1)."""
    if x.data.ndim != 2 or s.shape != (x.shape[0], 1):
        raise DimensionError(f"scale_rows shapes {x.shape} by {s.shape}")
    out_data = x.data * s.data

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * s.data)
        if s.requires_grad:
            s.accumulate_grad((g * x.data).sum(axis=1, keepdims=True))

    return _finalize(out_data, (x, s), backward, "scale_rows")


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out_data = np.empty_like(d)
    pos = d >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * out_data * (1.0 - out_data))

    return _finalize(out_data, (x,), backward, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * (1.0 - out_data * out_data))

    return _finalize(out_data, (x,), backward, "tanh")


def exp(x: Tensor) -> Tensor:
    out_data = np.exp(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * out_data)

    return _finalize(out_data, (x,), backward, "exp")


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = np.log(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g / x.data)

    return _finalize(out_data, (x,), backward, "log")


def sqrt(x: Tensor) -> Tensor:
    out_data = np.sqrt(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g / (2.0 * out_data))

    return _finalize(out_data, (x,), backward, "sqrt")


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), computed without overflow; gradient is sigmoid(x)."""
    out_data = np.logaddexp(0.0, x.data)

    def backward(g):
        if x.requires_grad:
            d = x.data
            sig = np.empty_like(d)
            pos = d >= 0
            sig[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
            ex = np.exp(d[~pos])
            sig[~pos] = ex / (1.0 + ex)
            x.accumulate_grad(g * sig)

    return _finalize(out_data, (x,), backward, "softplus")


def _check_axis(x: Tensor, axis: int) -> int:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {x.shape}")
    return axis % x.data.ndim


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax; rows along `axis` sum to 1."""
    axis = _check_axis(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            x.accumulate_grad(out_data * (g - dot))

    return _finalize(out_data, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - log_z

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g - np.exp(out_data) * g.sum(axis=axis, keepdims=True))

    return _finalize(out_data, (x,), backward, "log_softmax")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("concat of zero tensors")
    ndim = tensors[0].data.ndim
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for concat")
    axis = axis % ndim
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, offsets, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t.accumulate_grad(piece)

    return _finalize(out_data, tuple(tensors), backward, "concat")


def reduce_sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    if axis is not None:
        axis = _check_axis(x, axis)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if x.requires_grad:
            if axis is None:
                x.accumulate_grad(np.broadcast_to(g, x.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                x.accumulate_grad(np.broadcast_to(gg, x.shape).copy())

    return _finalize(out_data, (x,), backward, "reduce_sum")


def mean(x: Tensor) -> Tensor:
    return affine(reduce_sum(x), 1.0 / x.data.size)


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.shape))

    return _finalize(out_data, (x,), backward, "reshape")


def repeat_rows(x: Tensor, reps: int) -> Tensor:
    """(m, n) -> (m*reps, n) with each row repeated `reps` times consecutively."""
    if x.data.ndim != 2:
        raise DimensionError(f"repeat_rows needs a matrix, got shape {x.shape}")
    out_data = np.repeat(x.data, reps, axis=0)

    def backward(g):
        if x.requires_grad:
            m, n = x.shape
            x.accumulate_grad(g.reshape(m, reps, n).sum(axis=1))

    return _finalize(out_data, (x,), backward, "repeat_rows")


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of table (V, E) at integer ids (B,) -> (B, E)."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1 or table.data.ndim != 2:
        raise DimensionError("embedding expects 1-D ids and a 2-D table")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise DimensionError("embedding id out of range")
    out_data = table.data[idx]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx, g)
            table.accumulate_grad(gt)

    return _finalize(out_data, (table,), backward, "embedding")


def take_per_row(x: Tensor, ids) -> Tensor:
    """Pick one column per row: x (B, N), ids (B,) -> (B, 1)."""
    idx = np.asarray(ids, dtype=np.int64)
    if x.data.ndim != 2 or idx.shape != (x.shape[0],):
        raise DimensionError("take_per_row expects x (B, N) and ids (B,)")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[1]):
        raise DimensionError("take_per_row id out of range")
    rows = np.arange(x.shape[0])
    out_data = x.data[rows, idx][:, None]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, (rows, idx), g[:, 0])
            x.accumulate_grad(gx)

    return _finalize(out_data, (x,), backward, "take_per_row")


# ---------------------------------------------------------------------------
# GRU cell


@dataclass
class GruParams:
    """One GRU cell's weights; see module docstring for the update rule."""
    w_xr: Tensor
    w_hr: Tensor
    b_r: Tensor
    w_xz: Tensor
    w_hz: Tensor
    b_z: Tensor
    w_xn: Tensor
    w_hn: Tensor
    b_n: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, input_dim: int, hidden: int,
               scale: float = 0.08, dtype=np.float32) -> "GruParams":
        def w(shape):
            return uniform(rng, shape, scale=scale, dtype=dtype)
        return cls(
            w_xr=w((input_dim, hidden)), w_hr=w((hidden, hidden)), b_r=w((hidden,)),
            w_xz=w((input_dim, hidden)), w_hz=w((hidden, hidden)), b_z=w((hidden,)),
            w_xn=w((input_dim, hidden)), w_hn=w((hidden, hidden)), b_n=w((hidden,)),
        )

    def tensors(self) -> list[Tensor]:
        return [self.w_xr, self.w_hr, self.b_r, self.w_xz, self.w_hz, self.b_z,
                self.w_xn, self.w_hn, self.b_n]


def gru_cell(x: Tensor, h_prev: Tensor, params: GruParams) -> Tensor:
    """One GRU step: x (B, I), h_prev (B, H) -> (B, H)."""
    if x.data.ndim != 2 or h_prev.data.ndim != 2 or x.shape[0] != h_prev.shape[0]:
        raise DimensionError(f"gru_cell batch dims {x.shape} vs {h_prev.shape}")
    r = sigmoid(add(add(matmul(x, params.w_xr), matmul(h_prev, params.w_hr)), params.b_r))
    z = sigmoid(add(add(matmul(x, params.w_xz), matmul(h_prev, params.w_hz)), params.b_z))
    c = tanh(add(add(matmul(x, params.w_xn), matmul(mul(r, h_prev), params.w_hn)), params.b_n))
    return add(mul(z, h_prev), mul(affine(z, -1.0, 1.0), c))


# ---------------------------------------------------------------------------
# gradient verification


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor],
               delta: float = 1e-5, eps: float = 1e-6) -> float:
    """Max relative error between tape gradients of scalar f and central
    finite differences over every component of every input.

    Relative error is |analytic - numeric| / max(|analytic|, |numeric|, eps).
    eps must sit above the finite-difference noise floor (machine epsilon
    times |f| over delta), otherwise components whose true gradient is
    essentially zero report pure cancellation noise as error. Inputs are
    perturbed in place and restored. f must be deterministic.
    """
    for t in inputs:
        t.zero_grad()
    with Tape() as tape:
        out = f(*inputs)
        if out.data.size != 1:
            raise ContractError("grad_check needs a scalar-valued function")
        tape.backward(out)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in inputs]

    max_err = 0.0
    for t, an in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + delta
            f_plus = float(f(*inputs).data.reshape(-1)[0])
            flat[i] = orig - delta
            f_minus = float(f(*inputs).data.reshape(-1)[0])
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * delta)
            a = float(an_flat[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), eps)
            if err > max_err:
                max_err = err
    return max_err
