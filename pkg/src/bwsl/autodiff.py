"""Reverse-mode automatic differentiation over dense float64 arrays.

A small tape machine: while a :class:`Tape` is active, every primitive
operation appends one record holding vector-Jacobian closures for its
differentiable operands. ``backward`` replays the records once, in reverse
order, accumulating gradients in a fixed order so repeated passes over the
same tape are bitwise identical.

Primitives are closed under the set needed by the scoring network and the
trainer surrogate: add, mul, matmul, transpose, reshape, concatenate,
basic slicing, take (row gather), tanh, sigmoid, exp, log, sqrt, square,
softmax, sum, mean, and vmax (max of a vector with the subgradient sent to
the first maximal index). Every exposed operation checks its output for
finiteness and raises :class:`NonFiniteError` otherwise.
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NonFiniteError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "forward",
    "backward",
    "finite_diff_check",
    "add",
    "mul",
    "matmul",
    "transpose",
    "reshape",
    "concatenate",
    "take",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "sqrt",
    "square",
    "softmax",
    "tsum",
    "tmean",
    "vmax",
]

_local = threading.local()
_ids = itertools.count(1)


def _stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = []
        _local.tapes = stack
    return stack


def _active_tape():
    stack = _stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense float64 array with differentiation bookkeeping.

    The wrapped array is treated as immutable; never mutate ``data`` of a
    tensor that may still be referenced by a live tape.
    """

    __slots__ = ("data", "requires_grad", "tid")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor: non-finite input values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.tid = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; everything routes through the primitives below
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


class _Record:
    __slots__ = ("out_id", "pulls")

    def __init__(self, out_id: int, pulls: tuple):
        self.out_id = out_id
        self.pulls = pulls  # tuple of (parent_tid, vjp)


class Tape:
    """Ordered log of primitive applications for one forward evaluation.

    Single-writer: one tape may be active per thread at a time (tapes
    nest, the innermost records). Distinct tapes are independent.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self.root: Tensor | None = None
        self.inputs: tuple = ()

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack().pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    def gradients(self, root: Tensor, seed: float = 1.0) -> "GradientMap":
        """Gradient of the scalar ``root`` w.r.t. every tensor on the tape."""
        if root.size != 1:
            raise ShapeError(
                f"backward: root must be scalar, got shape {root.shape}"
            )
        grads: dict[int, np.ndarray] = {
            root.tid: np.full(root.shape, float(seed))
        }
        for rec in reversed(self._records):
            g = grads.get(rec.out_id)
            if g is None:
                continue
            for tid, vjp in rec.pulls:
                contrib = vjp(g)
                prev = grads.get(tid)
                grads[tid] = contrib if prev is None else prev + contrib
        return GradientMap(grads)


class GradientMap:
    """Result of a backward pass; indexes by the tensors themselves."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(t.tid)
        if g is None:
            return np.zeros(t.shape)
        return np.asarray(g, dtype=np.float64).reshape(t.shape)

    def __contains__(self, t: Tensor) -> bool:
        return t.tid in self._grads


def forward(fn: Callable, *inputs: Tensor) -> tuple[Tensor, Tape]:
    """Evaluate ``fn(*inputs)`` under a fresh tape and return (value, tape)."""
    tape = Tape()
    with tape:
        value = fn(*inputs)
    if not isinstance(value, Tensor):
        raise TypeError("forward: expression must return a Tensor")
    tape.root = value
    tape.inputs = inputs
    return value, tape


def backward(tape: Tape, seed: float = 1.0) -> GradientMap:
    """Replay ``tape`` once and return gradients of its root."""
    if tape.root is None:
        raise ShapeError("backward: tape has no root; produce it via forward()")
    return tape.gradients(tape.root, seed)


def finite_diff_check(
    fn: Callable[[Tensor], Tensor],
    point: Tensor,
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare the analytic gradient of a scalar ``fn`` at ``point`` against
    central finite differences.

    Returns max over checked coordinates of
    ``|analytic - central| / max(1, |analytic|)``. When ``max_coords`` is
    given, that many coordinates are sampled without replacement.
    """
    if eps <= 0:
        raise ValueError("finite_diff_check: eps must be positive")
    value, tape = forward(fn, point)
    if value.size != 1:
        raise ShapeError("finite_diff_check: fn must be scalar-valued")
    analytic = backward(tape)[point].ravel()
    n = point.size
    if max_coords is not None and max_coords < n:
        if rng is None:
            rng = np.random.default_rng(0)
        coords = rng.choice(n, size=max_coords, replace=False)
    else:
        coords = np.arange(n)
    base = point.data.ravel()
    worst = 0.0
    for c in coords:
        bumped = base.copy()
        bumped[c] = base[c] + eps
        f_plus = float(fn(Tensor(bumped.reshape(point.shape))).data)
        bumped[c] = base[c] - eps
        f_minus = float(fn(Tensor(bumped.reshape(point.shape))).data)
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(
                "finite_diff_check: non-finite evaluation near the point"
            )
        central = (f_plus - f_minus) / (2.0 * eps)
        err = abs(analytic[c] - central) / max(1.0, abs(analytic[c]))
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# primitive machinery


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _emit(op: str, out_arr: np.ndarray, pulls) -> Tensor:
    out_arr = np.asarray(out_arr, dtype=np.float64)
    if not np.all(np.isfinite(out_arr)):
        raise NonFiniteError(f"{op}: produced non-finite values")
    live = []
    for parent, vjp in pulls:
        if parent.requires_grad:
            live.append((parent.tid, vjp))
    out = Tensor.__new__(Tensor)
    out.data = out_arr
    out.requires_grad = bool(live)
    out.tid = next(_ids)
    if live:
        tape = _active_tape()
        if tape is not None:
            tape._records.append(_Record(out.tid, tuple(live)))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1
    )
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: {e}") from None
    ash, bsh = a.shape, b.shape
    return _emit(
        "add",
        out,
        (
            (a, lambda g: _unbroadcast(g, ash)),
            (b, lambda g: _unbroadcast(g, bsh)),
        ),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: {e}") from None
    ad, bd = a.data, b.data
    ash, bsh = a.shape, b.shape
    return _emit(
        "mul",
        out,
        (
            (a, lambda g: _unbroadcast(g * bd, ash)),
            (b, lambda g: _unbroadcast(g * ad, bsh)),
        ),
    )


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError(
            f"matmul: operands must be 1-d or 2-d, got {ad.ndim}-d and {bd.ndim}-d"
        )
    if ad.shape[-1] != bd.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {ad.shape} @ {bd.shape}"
        )
    out = ad @ bd
    a2 = ad if ad.ndim == 2 else ad[None, :]
    b2 = bd if bd.ndim == 2 else bd[:, None]

    def vjp_a(g, a2=a2, b2=b2, vec=(ad.ndim == 1)):
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        ga = g2 @ b2.T
        return ga[0] if vec else ga

    def vjp_b(g, a2=a2, b2=b2, vec=(bd.ndim == 1)):
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        gb = a2.T @ g2
        return gb[:, 0] if vec else gb

    return _emit("matmul", out, ((a, vjp_a), (b, vjp_b)))


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return _emit("transpose", a.data.T, ((a, lambda g: g.T),))


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in (shape if isinstance(shape, (tuple, list)) else (shape,)))
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: {e}") from None
    orig = a.shape
    return _emit("reshape", out, ((a, lambda g: g.reshape(orig)),))


def concatenate(parts: Sequence, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(p) for p in parts]
    if not tensors:
        raise ShapeError("concatenate: no operands")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concatenate: {e}") from None
    pulls = []
    offset = 0
    for t in tensors:
        width = t.shape[axis]
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(offset, offset + width)
        pulls.append((t, lambda g, sl=tuple(sl): g[sl]))
        offset += width
    return _emit("concatenate", out, tuple(pulls))


def _getitem(a: Tensor, key) -> Tensor:
    items = key if isinstance(key, tuple) else (key,)
    for it in items:
        if not isinstance(it, (int, np.integer, slice)):
            raise TypeError(
                "slice: only basic indexing (ints and slices) is differentiable"
            )
    out = np.asarray(a.data[key])
    shape = a.shape

    def vjp(g, key=key, shape=shape):
        z = np.zeros(shape)
        z[key] = g
        return z

    return _emit("slice", out, ((a, vjp),))


def take(a, indices) -> Tensor:
    """Gather rows of ``a`` (leading axis) at fixed integer ``indices``."""
    a = _as_tensor(a)
    if a.ndim < 1:
        raise ShapeError("take: operand must have at least one axis")
    idx = np.asarray(indices, dtype=np.intp)
    out = a.data[idx]
    shape = a.shape

    def vjp(g, idx=idx, shape=shape):
        z = np.zeros(shape)
        np.add.at(z, idx, g)
        return z

    return _emit("take", out, ((a, vjp),))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    y = np.tanh(a.data)
    return _emit("tanh", y, ((a, lambda g, y=y: g * (1.0 - y * y)),))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    t = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    return _emit("sigmoid", y, ((a, lambda g, y=y: g * y * (1.0 - y)),))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _emit("exp", y, ((a, lambda g, y=y: g * y),))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log: input must be strictly positive")
    x = a.data
    return _emit("log", np.log(x), ((a, lambda g, x=x: g / x),))


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt: input must be non-negative")
    y = np.sqrt(a.data)
    return _emit("sqrt", y, ((a, lambda g, y=y: g / (2.0 * y)),))


def square(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    return _emit("square", x * x, ((a, lambda g, x=x: 2.0 * x * g),))


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    if a.ndim < 1:
        raise ShapeError("softmax: operand must have at least one axis")
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g, y=y, axis=axis):
        return y * (g - np.sum(g * y, axis=axis, keepdims=True))

    return _emit("softmax", y, ((a, vjp),))


def _expand_reduced(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape
    return _emit(
        "sum",
        out,
        ((a, lambda g: _expand_reduced(g, shape, axis, keepdims).copy()),),
    )


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.size if axis is None else a.shape[axis]
    shape = a.shape

    def vjp(g, shape=shape, axis=axis, keepdims=keepdims, count=count):
        return _expand_reduced(g, shape, axis, keepdims) / count

    return _emit("mean", out, ((a, vjp),))


def vmax(a) -> Tensor:
    """Max of a vector; ties send the whole subgradient to the first index."""
    a = _as_tensor(a)
    if a.ndim != 1 or a.size == 0:
        raise ShapeError(f"vmax: expected a non-empty vector, got shape {a.shape}")
    j = int(np.argmax(a.data))
    out = np.asarray(a.data[j])
    shape = a.shape

    def vjp(g, j=j, shape=shape):
        z = np.zeros(shape)
        z[j] = g
        return z

    return _emit("vmax", out, ((a, vjp),))
