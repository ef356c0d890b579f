"""Small reverse-mode autodiff over float64 numpy arrays.

A :class:`Tensor` records the primitive that produced it and the parents it
was computed from, so every forward pass builds a fresh tape.  Only tensors
that (transitively) depend on a ``requires_grad`` leaf are recorded; calls on
plain constants run as ordinary numpy.

Primitives: :func:`matmul`, :func:`dense`, :func:`add`, :func:`sub`, :func:`scale`,
:func:`relu`, :func:`concat`, :func:`gather`, :func:`segment_sum`,
:func:`segment_mean`, :func:`mean`, :func:`sum`, :func:`squared_error`.

``relu'(0)`` is taken to be 0.
"""

from __future__ import annotations

import builtins
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import NonFiniteValue, NonScalarOutput, ShapeMismatch

__all__ = [
    "Tensor",
    "tensor",
    "matmul",
    "dense",
    "add",
    "sub",
    "scale",
    "relu",
    "concat",
    "Segments",
    "gather",
    "segment_sum",
    "segment_mean",
    "mean",
    "sum",
    "squared_error",
    "backward",
    "evaluate",
    "gradients",
    "grad_check",
]


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __mul__(self, s):
        return scale(self, s)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def tensor(x, requires_grad: bool = False) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, requires_grad)


def _const(x):
    """Constant operand: numpy array or scipy sparse matrix."""
    if isinstance(x, Tensor):
        return x
    if sp.issparse(x):
        return x
    return Tensor(x)


def _result(data, parents, backward, op) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    live = [p for p in parents if isinstance(p, Tensor) and p.requires_grad]
    out.requires_grad = bool(live)
    if live:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- primitives ---------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product.  ``a`` may be a constant scipy sparse matrix."""
    a = _const(a)
    b = _const(b)
    if sp.issparse(a):
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
        data = np.asarray(a @ b.data)

        def back(g):
            return (None, np.asarray(a.T @ g))

        return _result(data, (None, b), back, "matmul")

    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    data = a.data @ b.data
    A = a.data.reshape(1, -1) if a.ndim == 1 else a.data
    B = b.data.reshape(-1, 1) if b.ndim == 1 else b.data

    def back(g):
        G = np.reshape(g, (A.shape[0], B.shape[1]))
        ga = (G @ B.T).reshape(a.shape) if a.requires_grad else None
        gb = (A.T @ G).reshape(b.shape) if b.requires_grad else None
        return ga, gb

    return _result(data, (a, b), back, "matmul")


def dense(x, W, b, activate: bool = False) -> Tensor:
    """Fused affine layer ``x @ W + b`` with optional ReLU.

    Same values and gradients as ``relu(add(matmul(x, W), b))`` but records
    a single tape entry.
    """
    x = _const(x)
    W = _const(W)
    b = _const(b)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeMismatch(f"dense {x.shape} @ {W.shape} + {b.shape}")
    data = x.data @ W.data
    data += b.data
    mask = None
    if activate:
        mask = data > 0
        np.maximum(data, 0.0, out=data)

    def back(g):
        if mask is not None:
            g = g * mask
        gx = g @ W.data.T if x.requires_grad else None
        gW = x.data.T @ g if W.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gW, gb

    return _result(data, (x, W, b), back, "dense")


def add(a, b) -> Tensor:
    """Elementwise sum; ``b`` may broadcast along leading axes (e.g. a bias row)."""
    a = _const(a)
    b = _const(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch(f"add {a.shape} + {b.shape}") from exc

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(data, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a = _const(a)
    b = _const(b)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ShapeMismatch(f"sub {a.shape} - {b.shape}") from exc

    def back(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _result(data, (a, b), back, "sub")


def scale(a, s) -> Tensor:
    """Multiply by a constant scalar, or by a constant array that broadcasts to ``a``."""
    a = _const(a)
    s = s.data if isinstance(s, Tensor) else s
    data = a.data * s

    def back(g):
        return (_unbroadcast(g * s, a.shape),)

    return _result(data, (a,), back, "scale")


def relu(a) -> Tensor:
    a = _const(a)
    mask = a.data > 0
    data = np.maximum(a.data, 0.0)

    def back(g):
        return (g * mask,)

    return _result(data, (a,), back, "relu")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    """Concatenate along the last axis."""
    ts = [_const(t) for t in tensors]
    if axis not in (-1, ts[0].ndim - 1):
        raise ValueError("concat only supports the last axis")
    try:
        data = np.concatenate([t.data for t in ts], axis=-1)
    except ValueError as exc:
        raise ShapeMismatch(f"concat of shapes {[t.shape for t in ts]}") from exc
    bounds = np.cumsum([0] + [t.shape[-1] for t in ts])

    def back(g):
        return tuple(g[..., bounds[k] : bounds[k + 1]] for k in range(len(ts)))

    return _result(data, tuple(ts), back, "concat")


class Segments:
    """A fixed assignment of rows to segments, reusable across calls.

    Caches the sparse ``(n_segments, n_rows)`` indicator so repeated
    gathers/segment sums over the same index (e.g. the senders of a graph)
    skip rebuilding it.
    """

    def __init__(self, ids, n_segments: int):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.n_segments = int(n_segments)
        if self.ids.ndim != 1:
            raise ShapeMismatch("segment ids must be one-dimensional")
        if self.ids.size and (self.ids.min() < 0 or self.ids.max() >= self.n_segments):
            raise ShapeMismatch(f"segment id out of range 0..{self.n_segments - 1}")
        self._scatter = None
        self._counts = None

    def __len__(self):
        return len(self.ids)

    @property
    def scatter(self) -> sp.csr_matrix:
        if self._scatter is None:
            m = len(self.ids)
            self._scatter = sp.csr_matrix(
                (np.ones(m), (self.ids, np.arange(m))), shape=(self.n_segments, m)
            )
        return self._scatter

    @property
    def counts(self) -> np.ndarray:
        if self._counts is None:
            self._counts = np.bincount(self.ids, minlength=self.n_segments).astype(np.float64)
        return self._counts

    def sum_rows(self, values: np.ndarray) -> np.ndarray:
        """``out[ids[k]] += values[k]``."""
        if values.ndim == 1:
            return np.bincount(self.ids, weights=values, minlength=self.n_segments).astype(np.float64)
        flat = values.reshape(len(self.ids), int(np.prod(values.shape[1:])))
        return np.asarray(self.scatter @ flat).reshape((self.n_segments,) + values.shape[1:])


def _segments(ids, n_segments) -> Segments:
    if isinstance(ids, Segments):
        if n_segments is not None and n_segments != ids.n_segments:
            raise ShapeMismatch(f"n_segments {n_segments} != {ids.n_segments}")
        return ids
    if n_segments is None:
        raise ValueError("n_segments is required with a plain id array")
    return Segments(ids, n_segments)


def gather(a, index) -> Tensor:
    """Rows ``a[index]``; ``index`` is an int array or a :class:`Segments`."""
    a = _const(a)
    seg = _segments(index, a.shape[0] if not isinstance(index, Segments) else None)
    if seg.n_segments != a.shape[0]:
        raise ShapeMismatch(f"gather index built for {seg.n_segments} rows, tensor has {a.shape[0]}")
    data = a.data[seg.ids]

    def back(g):
        return (seg.sum_rows(g),)

    return _result(data, (a,), back, "gather")


def segment_sum(a, segment_ids, n_segments: int | None = None) -> Tensor:
    """Sum rows of ``a`` that share a segment id; empty segments are zero."""
    a = _const(a)
    seg = _segments(segment_ids, n_segments)
    if len(seg) != a.shape[0]:
        raise ShapeMismatch(f"{len(seg)} segment ids for {a.shape[0]} rows")
    data = seg.sum_rows(a.data)
    ids = seg.ids

    def back(g):
        return (g[ids],)

    return _result(data, (a,), back, "segment_sum")


def segment_mean(a, segment_ids, n_segments: int | None = None) -> Tensor:
    """Mean of rows per segment; empty segments are zero."""
    a = _const(a)
    seg = _segments(segment_ids, n_segments)
    if len(seg) != a.shape[0]:
        raise ShapeMismatch(f"{len(seg)} segment ids for {a.shape[0]} rows")
    counts = np.maximum(seg.counts, 1.0).reshape((-1,) + (1,) * (a.ndim - 1))
    data = seg.sum_rows(a.data) / counts
    ids = seg.ids

    def back(g):
        return ((g / counts)[ids],)

    return _result(data, (a,), back, "segment_mean")


def sum(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = _const(a)
    data = np.asarray(a.data.sum())

    def back(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(data, (a,), back, "sum")


def mean(a) -> Tensor:
    a = _const(a)
    n = max(a.data.size, 1)
    data = np.asarray(a.data.sum() / n)

    def back(g):
        return (np.full(a.shape, g / n),)

    return _result(data, (a,), back, "mean")


def squared_error(a, b, weights=None) -> Tensor:
    """``sum(w * (a - b)**2)`` with constant, broadcastable ``weights``."""
    a = _const(a)
    b = _const(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"squared_error {a.shape} vs {b.shape}")
    diff = a.data - b.data
    wdiff = diff if weights is None else diff * weights
    data = np.asarray((wdiff * diff).sum())

    def back(g):
        ga = 2.0 * g * wdiff
        return ga, -ga

    return _result(data, (a, b), back, "squared_error")


# -- reverse pass -------------------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if isinstance(p, Tensor) and p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(out: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of scalar ``out`` with respect to each tensor in ``wrt``."""
    if out.data.size != 1:
        raise NonScalarOutput(f"output has shape {out.shape}, expected a scalar")
    grads: dict[int, np.ndarray] = {id(out): np.ones_like(out.data)}
    if out.requires_grad:
        for node in reversed(_topological(out)):
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not isinstance(parent, Tensor) or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    return [
        grads.get(id(t), np.zeros_like(t.data)).reshape(t.shape) for t in wrt
    ]


Expr = Callable[..., Tensor]


def _leaves(inputs: Mapping, requires_grad: bool) -> dict[str, Tensor]:
    return {
        k: Tensor(v.data if isinstance(v, Tensor) else v, requires_grad)
        for k, v in inputs.items()
    }


def evaluate(expr: Expr, inputs: Mapping) -> Tensor:
    """Forward value of ``expr(**inputs)`` without recording a tape."""
    out = expr(**_leaves(inputs, False))
    out = tensor(out)
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteValue("expression produced a non-finite value")
    return out


def gradients(expr: Expr, inputs: Mapping, wrt: Sequence[str] | None = None) -> dict[str, np.ndarray]:
    """Gradient of scalar ``expr(**inputs)`` with respect to named inputs.

    Every input is differentiated unless ``wrt`` names a subset.
    """
    names = list(inputs) if wrt is None else list(wrt)
    leaves = {k: Tensor(v.data if isinstance(v, Tensor) else v, k in names) for k, v in inputs.items()}
    out = tensor(expr(**leaves))
    if out.data.size != 1:
        raise NonScalarOutput(f"output has shape {out.shape}, expected a scalar")
    return dict(zip(names, backward(out, [leaves[k] for k in names])))


def grad_check(expr: Expr, inputs: Mapping, eps: float = 1e-5, wrt: Sequence[str] | None = None) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    The denominator is ``max(|analytic|, |numeric|, 1e-8)`` per element.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = {k: np.array(v.data if isinstance(v, Tensor) else v, dtype=np.float64) for k, v in inputs.items()}
    analytic = gradients(expr, base, wrt)

    def f(values):
        return evaluate(expr, values).item()

    worst = 0.0
    for name, ga in analytic.items():
        x = base[name]
        flat = x.reshape(-1)
        ga = ga.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            fp = f(base)
            flat[k] = orig - eps
            fm = f(base)
            flat[k] = orig
            num = (fp - fm) / (2.0 * eps)
            denom = builtins.max(abs(ga[k]), abs(num), 1e-8)
            worst = builtins.max(worst, abs(ga[k] - num) / denom)
    return worst
