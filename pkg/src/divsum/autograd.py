"""Dense 2-D float64 matrices with reverse-mode differentiation.

The numeric core of the summarizer. A :class:`Matrix` wraps a 2-D numpy
array plus an optional gradient accumulator. A :class:`Tape` records every
differentiable operation in execution order; :func:`backward` replays the
tape in reverse and accumulates gradients additively into every operand
that can reach the loss.

Conventions:
  * all values are float64, all shapes strictly 2-D
  * gradients accumulate across uses of a matrix; callers zero them
    between optimizer steps
  * while a tape is alive, the ``.data`` of recorded matrices must not be
    mutated in place (the recorded closures keep references, not copies)
  * passing ``tape=None`` runs any operation forward-only
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class NumericError(ValueError):
    """Input values are outside an operation's numeric domain."""


class ContractError(ValueError):
    """A non-shape precondition was violated."""


class Matrix:
    """A rows x cols block of float64 values with an optional gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim != 2:
            raise ShapeError(f"Matrix requires 2-D data, got ndim={arr.ndim}")
        self.data = arr
        self.grad: np.ndarray | None = None

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls(np.zeros((rows, cols)))

    @classmethod
    def ones(cls, rows: int, cols: int) -> "Matrix":
        return cls(np.ones((rows, cols)))

    @classmethod
    def scalar(cls, value: float) -> "Matrix":
        return cls(np.full((1, 1), float(value)))

    @classmethod
    def column(cls, values) -> "Matrix":
        return cls(np.asarray(values, dtype=np.float64).reshape(-1, 1))

    @classmethod
    def row(cls, values) -> "Matrix":
        return cls(np.asarray(values, dtype=np.float64).reshape(1, -1))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 matrix, got {self.rows}x{self.cols}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols})"


class Tape:
    """Ordered record of executed differentiable operations.

    Each record is a closure that reads the output gradient and adds the
    operation's contribution to its operands' gradients. Replaying the
    records in reverse execution order is exactly reverse-mode
    differentiation.
    """

    def __init__(self):
        self.records: list = []

    def record(self, backward_fn):
        self.records.append(backward_fn)

    def __len__(self) -> int:
        return len(self.records)


def _accum(m: Matrix, g: np.ndarray):
    if m.grad is None:
        m.grad = np.zeros_like(m.data)
    m.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum gradient g down to `shape` across any broadcast axes."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _broadcast_shape(a: Matrix, b: Matrix, op: str) -> tuple[int, int]:
    try:
        return np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(
            f"{op}: shapes {a.rows}x{a.cols} and {b.rows}x{b.cols} do not broadcast"
        ) from None


def backward(loss: Matrix, tape: Tape):
    """Populate gradients of everything on `tape` that reaches `loss`.

    `loss` must be 1x1 and must have been produced through `tape`.
    Parameters the loss cannot reach keep whatever gradient they already
    hold (zeros, if the caller zeroed them first).
    """
    if loss.data.shape != (1, 1):
        raise ContractError(f"backward needs a scalar loss, got {loss.rows}x{loss.cols}")
    _accum(loss, np.ones((1, 1)))
    for fn in reversed(tape.records):
        fn()


# ---------------------------------------------------------------------------
# operations


def matmul(a: Matrix, b: Matrix, tape: Tape | None = None) -> Matrix:
    """Standard matrix product a @ b."""
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: inner dimensions disagree, {a.rows}x{a.cols} @ {b.rows}x{b.cols}"
        )
    out = Matrix(a.data @ b.data)
    if tape is not None:
        a_data, b_data = a.data, b.data

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, g @ b_data.T)
            _accum(b, a_data.T @ g)

        tape.record(bwd)
    return out


def transpose(a: Matrix, tape: Tape | None = None) -> Matrix:
    out = Matrix(a.data.T.copy())
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, g.T)

        tape.record(bwd)
    return out


def add(a: Matrix, b: Matrix, tape: Tape | None = None) -> Matrix:
    """Elementwise sum; an operand with a length-1 axis broadcasts."""
    _broadcast_shape(a, b, "add")
    out = Matrix(a.data + b.data)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))

        tape.record(bwd)
    return out


def subtract(a: Matrix, b: Matrix, tape: Tape | None = None) -> Matrix:
    _broadcast_shape(a, b, "subtract")
    out = Matrix(a.data - b.data)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, -_unbroadcast(g, b.data.shape))

        tape.record(bwd)
    return out


def multiply(a: Matrix, b: Matrix, tape: Tape | None = None) -> Matrix:
    """Elementwise (Hadamard) product with the same broadcasting as add."""
    _broadcast_shape(a, b, "multiply")
    out = Matrix(a.data * b.data)
    if tape is not None:
        a_data, b_data = a.data, b.data

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, _unbroadcast(g * b_data, a_data.shape))
            _accum(b, _unbroadcast(g * a_data, b_data.shape))

        tape.record(bwd)
    return out


def scale(a: Matrix, c: float, tape: Tape | None = None) -> Matrix:
    """Multiply every entry by the constant c."""
    c = float(c)
    out = Matrix(a.data * c)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, g * c)

        tape.record(bwd)
    return out


def relu(a: Matrix, tape: Tape | None = None) -> Matrix:
    out = Matrix(np.maximum(a.data, 0.0))
    if tape is not None:
        mask = (a.data > 0.0).astype(np.float64)

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, g * mask)

        tape.record(bwd)
    return out


def sigmoid(a: Matrix, tape: Tape | None = None) -> Matrix:
    # split by sign for stability at large |x|
    x = a.data
    pos = x >= 0
    s = np.empty_like(x)
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    s[~pos] = e / (1.0 + e)
    out = Matrix(s)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, g * s * (1.0 - s))

        tape.record(bwd)
    return out


def log(a: Matrix, tape: Tape | None = None) -> Matrix:
    """Natural log; entries must be strictly positive."""
    if np.any(a.data <= 0.0):
        raise NumericError("log: input has non-positive entries")
    out = Matrix(np.log(a.data))
    if tape is not None:
        a_data = a.data

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, g / a_data)

        tape.record(bwd)
    return out


def sqrt(a: Matrix, tape: Tape | None = None) -> Matrix:
    """Elementwise square root; zero entries get subgradient 0."""
    if np.any(a.data < 0.0):
        raise NumericError("sqrt: input has negative entries")
    root = np.sqrt(a.data)
    out = Matrix(root)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            d = np.zeros_like(root)
            nz = root > 0.0
            d[nz] = 0.5 / root[nz]
            _accum(a, g * d)

        tape.record(bwd)
    return out


def rsqrt(a: Matrix, tape: Tape | None = None) -> Matrix:
    """Elementwise 1/sqrt(x); entries must be strictly positive."""
    if np.any(a.data <= 0.0):
        raise NumericError("rsqrt: input has non-positive entries")
    out = Matrix(1.0 / np.sqrt(a.data))
    if tape is not None:
        a_data = a.data
        val = out.data

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, g * (-0.5) * val / a_data)

        tape.record(bwd)
    return out


def clip(a: Matrix, lo: float, hi: float, tape: Tape | None = None) -> Matrix:
    """Clamp to [lo, hi]; gradient passes through unclipped entries only."""
    out = Matrix(np.clip(a.data, lo, hi))
    if tape is not None:
        mask = ((a.data >= lo) & (a.data <= hi)).astype(np.float64)

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, g * mask)

        tape.record(bwd)
    return out


def sum_all(a: Matrix, tape: Tape | None = None) -> Matrix:
    """Sum of all entries, as a 1x1 matrix."""
    out = Matrix.scalar(float(a.data.sum()))
    if tape is not None:
        shape = a.data.shape

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, np.full(shape, g[0, 0]))

        tape.record(bwd)
    return out


def column_softmax(a: Matrix, tape: Tape | None = None) -> Matrix:
    """Softmax over each column (the first index), max-stabilized."""
    if not np.all(np.isfinite(a.data)):
        raise NumericError("column_softmax: input contains NaN or Inf")
    z = a.data - a.data.max(axis=0, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=0, keepdims=True)
    out = Matrix(s)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, s * (g - (g * s).sum(axis=0, keepdims=True)))

        tape.record(bwd)
    return out


def row_norms_squared(a: Matrix, tape: Tape | None = None) -> Matrix:
    """Column vector of squared Euclidean row norms."""
    out = Matrix(np.sum(a.data * a.data, axis=1, keepdims=True))
    if tape is not None:
        a_data = a.data

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(a, 2.0 * a_data * g)

        tape.record(bwd)
    return out


def gather_rows(a: Matrix, indices, tape: Tape | None = None) -> Matrix:
    """New matrix whose row t is row indices[t] of a (repeats allowed)."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("gather_rows: indices must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise ContractError(f"gather_rows: index out of range for {a.rows} rows")
    out = Matrix(a.data[idx])
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            scatter = np.zeros_like(a.data)
            np.add.at(scatter, idx, g)
            _accum(a, scatter)

        tape.record(bwd)
    return out


def take_per_row(a: Matrix, col_indices, tape: Tape | None = None) -> Matrix:
    """out[i, j] = a[i, col_indices[i, j]] for a fixed integer index map."""
    idx = np.asarray(col_indices, dtype=np.intp)
    if idx.ndim != 2 or idx.shape[0] != a.rows:
        raise ShapeError("take_per_row: index map must have one row per input row")
    if idx.size and (idx.min() < 0 or idx.max() >= a.cols):
        raise ContractError(f"take_per_row: column index out of range for {a.cols} cols")
    rows = np.arange(a.rows)[:, None]
    out = Matrix(a.data[rows, idx])
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            scatter = np.zeros_like(a.data)
            np.add.at(scatter, (rows, idx), g)
            _accum(a, scatter)

        tape.record(bwd)
    return out


def submatrix(a: Matrix, r0: int, r1: int, c0: int, c1: int,
              tape: Tape | None = None) -> Matrix:
    """Contiguous block a[r0:r1, c0:c1] as its own matrix."""
    if not (0 <= r0 < r1 <= a.rows and 0 <= c0 < c1 <= a.cols):
        raise ShapeError(
            f"submatrix: block [{r0}:{r1}, {c0}:{c1}] outside {a.rows}x{a.cols}"
        )
    out = Matrix(a.data[r0:r1, c0:c1].copy())
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            scatter = np.zeros_like(a.data)
            scatter[r0:r1, c0:c1] = g
            _accum(a, scatter)

        tape.record(bwd)
    return out


def concat_rows(mats: list[Matrix], tape: Tape | None = None) -> Matrix:
    """Stack matrices vertically; all must share a column count."""
    if not mats:
        raise ShapeError("concat_rows: empty input")
    cols = mats[0].cols
    for m in mats:
        if m.cols != cols:
            raise ShapeError(f"concat_rows: column counts differ ({m.cols} vs {cols})")
    out = Matrix(np.vstack([m.data for m in mats]))
    if tape is not None:
        offsets = np.cumsum([0] + [m.rows for m in mats])

        def bwd():
            g = out.grad
            if g is None:
                return
            for m, lo, hi in zip(mats, offsets[:-1], offsets[1:]):
                _accum(m, g[lo:hi])

        tape.record(bwd)
    return out
