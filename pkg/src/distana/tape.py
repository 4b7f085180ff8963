"""Dense float64 tensors with a define-by-run reverse-mode gradient tape.

A :class:`Tape` records primitive operations while it is the active
context; :meth:`Tape.backward` replays them in strict reverse order of
recording and accumulates gradients per tensor id. Tensors are immutable
values; a tape is single-threaded, and independent tapes may run on
different threads (the active-tape stack is thread-local).

Every operation validates shapes up front and checks its result for
NaN/Inf, raising :class:`~distana.errors.NumericError` on the spot so a
diverging computation fails at the op that produced it.

Broadcasting is deliberately limited to scalar-vs-tensor; anything wider
must go through an explicit primitive (``add_rowvec``) so each gradient
rule stays auditable. The fused kernels (``lstm_cell``, ``gather_sum``,
``gather_slot``) delegate to the active kernel backend.
"""

from __future__ import annotations

import itertools
import math
import threading
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError, TapeError
from .kernels.numpy_backend import sigmoid as _stable_sigmoid

_ids = itertools.count()
_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape():
    """The innermost Tape currently entered on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Immutable view of a C-order float64 array plus a tape identity."""

    __slots__ = ("data", "requires_grad", "tid")

    def __init__(self, data, requires_grad: bool = False):
        # asarray with order="C" keeps 0-d shapes (ascontiguousarray would
        # promote scalars to 1-d) while still forcing a row-major layout
        arr = np.asarray(data, dtype=np.float64, order="C")
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.tid = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


class Tape:
    """Ordered op record plus per-tensor-id gradient accumulators."""

    def __init__(self):
        self._ops: list[Callable[[Tape], None]] = []
        self._grads: dict[int, np.ndarray] = {}
        self._tracked: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self

    def _tracks(self, t: Tensor) -> bool:
        return t.requires_grad or t.tid in self._tracked

    def _record(self, outputs: Sequence[Tensor], backward_fn: Callable[["Tape"], None]) -> None:
        for out in outputs:
            self._tracked.add(out.tid)
        self._ops.append(backward_fn)

    def _accumulate(self, t: Tensor, g: np.ndarray) -> None:
        if not self._tracks(t):
            return
        cur = self._grads.get(t.tid)
        self._grads[t.tid] = g if cur is None else cur + g

    def _out_grad(self, t: Tensor):
        return self._grads.get(t.tid)

    def backward(self, loss: Tensor) -> None:
        """Populate gradients of `loss` w.r.t. everything recorded before it."""
        if loss.tid not in self._tracked:
            raise TapeError("backward: loss was not produced on this tape")
        if loss.data.shape != ():
            raise ShapeError(f"backward: loss must be a scalar, got shape {loss.data.shape}")
        self._grads[loss.tid] = np.ones(())
        for bw in reversed(self._ops):
            bw(self)

    def grad(self, t: Tensor) -> np.ndarray:
        """Accumulated gradient of the last backward() w.r.t. `t` (zeros if none)."""
        g = self._grads.get(t.tid)
        if g is None:
            return np.zeros_like(t.data)
        return g


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _finite(arr: np.ndarray, op: str) -> None:
    # fast path: a finite sum proves every element finite; an infinite sum
    # may still be benign overflow of legitimate values, so confirm
    if not math.isfinite(float(arr.sum())):
        if not np.isfinite(arr).all():
            raise NumericError(f"{op} produced non-finite values")


def _make(arr: np.ndarray, op: str, inputs: Sequence[Tensor],
          backward_builder) -> Tensor:
    """Wrap `arr`, and if the active tape tracks any input, record the op."""
    _finite(arr, op)
    out = Tensor(arr)
    tape = active_tape()
    if tape is not None and any(tape._tracks(t) for t in inputs):
        tape._record((out,), backward_builder(out))
    return out


# ---------------------------------------------------------------------------
# primitive operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(a, g @ b.data.T)
            tape._accumulate(b, a.data.T @ g)
        return bw

    return _make(a.data @ b.data, "matmul", (a, b), build)


def _elementwise_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape == b.data.shape:
        return
    if a.data.shape == () or b.data.shape == ():
        return
    raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} are neither equal nor scalar")


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    # scalar operand of a broadcast op collects the sum of its gradient
    if t.data.shape == () and g.shape != ():
        return np.asarray(g.sum())
    return g


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _elementwise_shapes(a, b, "add")

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(a, _reduce_to(g, a))
            tape._accumulate(b, _reduce_to(g, b))
        return bw

    return _make(a.data + b.data, "add", (a, b), build)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _elementwise_shapes(a, b, "sub")

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(a, _reduce_to(g, a))
            tape._accumulate(b, _reduce_to(-g, b))
        return bw

    return _make(a.data - b.data, "sub", (a, b), build)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _elementwise_shapes(a, b, "mul")

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(a, _reduce_to(g * b.data, a))
            tape._accumulate(b, _reduce_to(g * a.data, b))
        return bw

    return _make(a.data * b.data, "mul", (a, b), build)


def sigmoid(x) -> Tensor:
    x = _coerce(x)
    s = _stable_sigmoid(x.data)

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(x, g * s * (1.0 - s))
        return bw

    return _make(s, "sigmoid", (x,), build)


def tanh(x) -> Tensor:
    x = _coerce(x)
    t = np.tanh(x.data)

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(x, g * (1.0 - t * t))
        return bw

    return _make(t, "tanh", (x,), build)


def sum_all(x: Tensor) -> Tensor:
    x = _coerce(x)

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(x, np.full_like(x.data, float(g)))
        return bw

    return _make(np.asarray(x.data.sum()), "sum_all", (x,), build)


def mean_all(x: Tensor) -> Tensor:
    x = _coerce(x)
    n = x.data.size

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(x, np.full_like(x.data, float(g) / n))
        return bw

    return _make(np.asarray(x.data.mean()), "mean_all", (x,), build)


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over all elements of the squared difference."""
    pred, target = _coerce(pred), _coerce(target)
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"mse: shapes {pred.data.shape} and {target.data.shape} differ")
    d = sub(pred, target)
    return mean_all(mul(d, d))


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = [_coerce(p) for p in parts]
    if not parts:
        raise ShapeError("concat_cols: no inputs")
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != rows:
            raise ShapeError("concat_cols: inputs must be 2-D with equal row counts")
    widths = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                tape._accumulate(p, np.ascontiguousarray(g[:, lo:hi]))
        return bw

    return _make(np.concatenate([p.data for p in parts], axis=1), "concat_cols", parts, build)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    x = _coerce(x)
    if x.data.ndim != 2 or not (0 <= start <= stop <= x.data.shape[1]):
        raise ShapeError(f"slice_cols: bad range [{start}, {stop}) for shape {x.data.shape}")

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            gx = np.zeros_like(x.data)
            gx[:, start:stop] = g
            tape._accumulate(x, gx)
        return bw

    return _make(np.ascontiguousarray(x.data[:, start:stop]), "slice_cols", (x,), build)


def reshape(x: Tensor, shape) -> Tensor:
    x = _coerce(x)
    shape = tuple(shape)
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.data.shape} as {shape}")

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(x, g.reshape(x.data.shape))
        return bw

    return _make(x.data.reshape(shape), "reshape", (x,), build)


def add_rowvec(a: Tensor, v: Tensor) -> Tensor:
    """Add a length-n vector to every row of an (m, n) matrix."""
    a, v = _coerce(a), _coerce(v)
    if a.data.ndim != 2 or v.data.ndim != 1 or a.data.shape[1] != v.data.shape[0]:
        raise ShapeError(f"add_rowvec: shapes {a.data.shape} and {v.data.shape} do not align")

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(a, g)
            tape._accumulate(v, g.sum(axis=0))
        return bw

    return _make(a.data + v.data, "add_rowvec", (a, v), build)


# ---------------------------------------------------------------------------
# fused kernel operations (dispatch to the active backend)


def lstm_cell(z: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """Pointwise LSTM update; returns (h_new, c_new).

    z holds the (n, 4H) gate preactivations in [input, forget, candidate,
    output] block order; c_prev is the (n, H) previous cell state.
    """
    z, c_prev = _coerce(z), _coerce(c_prev)
    if z.data.ndim != 2 or c_prev.data.ndim != 2 or z.data.shape != (
            c_prev.data.shape[0], 4 * c_prev.data.shape[1]):
        raise ShapeError(f"lstm_cell: shapes {z.data.shape} and {c_prev.data.shape} do not align")
    k = kernels.backend()
    h_arr, c_arr, i, f, g, o, tc = k.lstm_cell_forward(z.data, c_prev.data)
    _finite(h_arr, "lstm_cell")
    _finite(c_arr, "lstm_cell")
    h_out = Tensor(h_arr)
    c_out = Tensor(c_arr)
    tape = active_tape()
    if tape is not None and (tape._tracks(z) or tape._tracks(c_prev)):
        def bw(tp):
            gh = tp._out_grad(h_out)
            gc = tp._out_grad(c_out)
            if gh is None and gc is None:
                return
            if gh is None:
                gh = np.zeros_like(h_arr)
            if gc is None:
                gc = np.zeros_like(c_arr)
            dz, dc_prev = kernels.backend().lstm_cell_backward(
                gh, gc, c_prev.data, i, f, g, o, tc)
            tp._accumulate(z, dz)
            tp._accumulate(c_prev, dc_prev)
        tape._record((h_out, c_out), bw)
    return h_out, c_out


def gather_sum(buf: Tensor, idx: np.ndarray) -> Tensor:
    """Per-cell sum of neighbor rows; idx is (directions, cells) with -1 absent."""
    buf = _coerce(buf)
    if buf.data.ndim != 2 or idx.ndim != 2 or idx.shape[1] != buf.data.shape[0]:
        raise ShapeError(f"gather_sum: index {idx.shape} does not match buffer {buf.data.shape}")

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(buf, kernels.backend().gather_sum_backward(g, idx))
        return bw

    return _make(kernels.backend().gather_sum(buf.data, idx), "gather_sum", (buf,), build)


def gather_slot(buf: Tensor, idx: np.ndarray, slots: np.ndarray) -> Tensor:
    """Direction-indexed gather: column d of the result reads slot slots[d]
    of the neighbor in direction d (zero where absent)."""
    buf = _coerce(buf)
    if buf.data.ndim != 2 or idx.ndim != 2 or idx.shape[1] != buf.data.shape[0]:
        raise ShapeError(f"gather_slot: index {idx.shape} does not match buffer {buf.data.shape}")
    if slots.shape != (idx.shape[0],) or slots.max(initial=0) >= buf.data.shape[1]:
        raise ShapeError("gather_slot: slot table does not match buffer width")
    width = buf.data.shape[1]

    def build(out):
        def bw(tape):
            g = tape._out_grad(out)
            if g is None:
                return
            tape._accumulate(buf, kernels.backend().gather_slot_backward(g, idx, slots, width))
        return bw

    return _make(kernels.backend().gather_slot(buf.data, idx, slots), "gather_slot", (buf,), build)


# ---------------------------------------------------------------------------
# gradient checking


def _rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-12, abs(analytic) + abs(numeric))


def gradcheck(f, points, eps: float = 1e-6) -> float:
    """Max relative error of tape gradients vs central finite differences.

    `f` maps the given tensors to a scalar Tensor and must be free of side
    effects; `points` is one Tensor or a sequence. Relative error is
    |analytic - numeric| / max(1e-12, |analytic| + |numeric|), maximized
    over every coordinate of every point.
    """
    if isinstance(points, Tensor):
        points = [points]
    points = list(points)
    return max(gradcheck_groups(f, {str(i): p for i, p in enumerate(points)}, eps).values())


def gradcheck_groups(f, named_points: dict, eps: float = 1e-6) -> dict:
    """Like gradcheck, but reports the worst relative error per named tensor."""
    names = list(named_points)
    base = [named_points[n] for n in names]
    with Tape() as tape:
        loss = f(*base)
    if loss.data.shape != ():
        raise ShapeError("gradcheck: function must return a scalar")
    tape.backward(loss)
    analytic = [tape.grad(p) for p in base]

    def eval_at(idx, coord, value) -> float:
        args = []
        for j, p in enumerate(base):
            if j == idx:
                data = p.data.copy()
                data.reshape(-1)[coord] = value
                args.append(Tensor(data, requires_grad=p.requires_grad))
            else:
                args.append(p)
        return float(f(*args).data)

    worst = {}
    for j, name in enumerate(names):
        flat = base[j].data.reshape(-1)
        grad = analytic[j].reshape(-1)
        err = 0.0
        for coord in range(flat.size):
            x0 = flat[coord]
            fp = eval_at(j, coord, x0 + eps)
            fm = eval_at(j, coord, x0 - eps)
            numeric = (fp - fm) / (2.0 * eps)
            err = max(err, _rel_err(float(grad[coord]), numeric))
        worst[name] = err
    return worst
