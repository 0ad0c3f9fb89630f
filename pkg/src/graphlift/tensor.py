"""Reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray plus an optional gradient.  Operations build a
directed acyclic graph of closures; calling backward() on a scalar result
walks the graph in reverse topological order and accumulates gradients
into every tensor that requires them.

All arithmetic is done in 64-bit floats.  Broadcasting follows numpy
rules; gradients of broadcast operands are summed back down to the
operand's own shape.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, DomainError, NumericError

__all__ = [
    "Tensor",
    "matmul",
    "relu",
    "sigmoid",
    "concat_features",
    "mse",
    "gather_nodes",
    "scatter_nodes",
]


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # Extra leading axes were added by broadcasting: sum them away.
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # Axes of size 1 in the target were stretched: sum with keepdims.
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array with an optional gradient and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = _as_f64(data)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor constructed from non-finite values")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple, backward) -> "Tensor":
        """Internal constructor for op results.  Skips the finite check;
        training-loop code is responsible for detecting divergence."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # ---- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    # ---- autodiff ------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise DimensionError(
                f"backward() starts from a scalar, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        for node in topo:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # ---- arithmetic ----------------------------------------------------

    @staticmethod
    def _lift(other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(other)

    def __add__(self, other) -> "Tensor":
        other = Tensor._lift(other)
        a, b = self, other
        out = Tensor._from_op(a.data + b.data, (a, b), None)
        if out.requires_grad:
            def backward(g):
                if a.requires_grad:
                    a.grad += _unbroadcast(g, a.data.shape)
                if b.requires_grad:
                    b.grad += _unbroadcast(g, b.data.shape)
            out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self
        out = Tensor._from_op(-a.data, (a,), None)
        if out.requires_grad:
            def backward(g):
                a.grad += -g
            out._backward = backward
        return out

    def __sub__(self, other) -> "Tensor":
        other = Tensor._lift(other)
        a, b = self, other
        out = Tensor._from_op(a.data - b.data, (a, b), None)
        if out.requires_grad:
            def backward(g):
                if a.requires_grad:
                    a.grad += _unbroadcast(g, a.data.shape)
                if b.requires_grad:
                    b.grad += _unbroadcast(-g, b.data.shape)
            out._backward = backward
        return out

    def __rsub__(self, other) -> "Tensor":
        return Tensor._lift(other) - self

    def __mul__(self, other) -> "Tensor":
        other = Tensor._lift(other)
        a, b = self, other
        out = Tensor._from_op(a.data * b.data, (a, b), None)
        if out.requires_grad:
            def backward(g):
                if a.requires_grad:
                    a.grad += _unbroadcast(g * b.data, a.data.shape)
                if b.requires_grad:
                    b.grad += _unbroadcast(g * a.data, b.data.shape)
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = Tensor._lift(other)
        a, b = self, other
        out = Tensor._from_op(a.data / b.data, (a, b), None)
        if out.requires_grad:
            def backward(g):
                if a.requires_grad:
                    a.grad += _unbroadcast(g / b.data, a.data.shape)
                if b.requires_grad:
                    b.grad += _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
            out._backward = backward
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return Tensor._lift(other) / self

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    # ---- shape ops -----------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.data.shape
        out = Tensor._from_op(a.data.reshape(shape), (a,), None)
        if out.requires_grad:
            def backward(g):
                a.grad += g.reshape(old)
            out._backward = backward
        return out

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)
        out = Tensor._from_op(np.asarray(out_data), (a,), None)
        if out.requires_grad:
            def backward(g):
                if axis is None:
                    a.grad += np.broadcast_to(g, a.data.shape)
                else:
                    gg = g if keepdims else np.expand_dims(g, axis)
                    a.grad += np.broadcast_to(gg, a.data.shape)
            out._backward = backward
        return out

    def mean(self) -> "Tensor":
        n = self.data.size
        if n == 0:
            raise DomainError("mean of an empty tensor")
        return self.sum() * (1.0 / n)

    def sqrt(self) -> "Tensor":
        a = self
        root = np.sqrt(a.data)
        out = Tensor._from_op(root, (a,), None)
        if out.requires_grad:
            def backward(g):
                a.grad += g * (0.5 / root)
            out._backward = backward
        return out


# ---- free functions ----------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy-style batch broadcasting.

    Both operands must have at least 2 dimensions; the last axis of `a`
    must match the second-to-last axis of `b`.  Leading axes broadcast,
    and gradients of broadcast operands are summed back down.
    """
    a = Tensor._lift(a)
    b = Tensor._lift(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(
            f"matmul needs 2-D or higher operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.data.shape} vs {b.data.shape}"
        )
    out = Tensor._from_op(a.data @ b.data, (a, b), None)
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                a.grad += _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        out._backward = backward
    return out


def relu(x: Tensor) -> Tensor:
    """Elementwise max(x, 0).  The gradient at exactly 0 is 0."""
    x = Tensor._lift(x)
    mask = x.data > 0
    out = Tensor._from_op(np.where(mask, x.data, 0.0), (x,), None)
    if out.requires_grad:
        def backward(g):
            x.grad += np.where(mask, g, 0.0)
        out._backward = backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic function."""
    x = Tensor._lift(x)
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = Tensor._from_op(s, (x,), None)
    if out.requires_grad:
        def backward(g):
            x.grad += g * s * (1.0 - s)
        out._backward = backward
    return out


def concat_features(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last (feature) axis.

    All operands must agree on every axis except the last.  Zero-width
    operands are legal and contribute nothing.
    """
    ts = [Tensor._lift(t) for t in tensors]
    if not ts:
        raise DomainError("concat_features needs at least one tensor")
    lead = ts[0].data.shape[:-1]
    for t in ts[1:]:
        if t.data.shape[:-1] != lead:
            raise DimensionError(
                "concat_features operands disagree on leading shape: "
                f"{ts[0].data.shape} vs {t.data.shape}"
            )
    out_data = np.concatenate([t.data for t in ts], axis=-1)
    out = Tensor._from_op(out_data, tuple(ts), None)
    if out.requires_grad:
        widths = [t.data.shape[-1] for t in ts]
        offsets = np.cumsum([0] + widths)
        def backward(g):
            for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
                if t.requires_grad and hi > lo:
                    t.grad += g[..., lo:hi]
        out._backward = backward
    return out


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error over all elements; returns a scalar tensor."""
    pred = Tensor._lift(pred)
    tgt = target.data if isinstance(target, Tensor) else _as_f64(target)
    if pred.data.shape != tgt.shape:
        raise DimensionError(
            f"mse operands must match exactly: {pred.data.shape} vs {tgt.shape}"
        )
    if pred.data.size == 0:
        raise DomainError("mse of empty tensors")
    diff = pred.data - tgt
    val = np.asarray(np.mean(diff * diff))
    out = Tensor._from_op(val, (pred,), None)
    if out.requires_grad:
        scale = 2.0 / diff.size
        def backward(g):
            pred.grad += g * scale * diff
        out._backward = backward
    return out


def gather_nodes(x: Tensor, indices) -> Tensor:
    """Select rows along the node axis (second to last): out = x[..., idx, :]."""
    x = Tensor._lift(x)
    if x.data.ndim < 2:
        raise DimensionError(f"gather_nodes needs a node axis, got shape {x.data.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise DimensionError("gather_nodes indices must be a flat sequence")
    n = x.data.shape[-2]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise DomainError(f"gather_nodes index out of range for {n} nodes")
    out = Tensor._from_op(x.data[..., idx, :], (x,), None)
    if out.requires_grad:
        def backward(g):
            buf = np.zeros_like(x.data)
            # += through fancy indexing so duplicate indices accumulate
            np.add.at(buf, (..., idx, slice(None)), g)
            x.grad += buf
        out._backward = backward
    return out


def scatter_nodes(x: Tensor, indices, num_nodes: int) -> Tensor:
    """Place rows of `x` at `indices` in a zero tensor with `num_nodes` rows.

    Inverse of gather_nodes for distinct indices; the remaining rows stay 0.
    """
    x = Tensor._lift(x)
    if x.data.ndim < 2:
        raise DimensionError(f"scatter_nodes needs a node axis, got shape {x.data.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or idx.size != x.data.shape[-2]:
        raise DimensionError("scatter_nodes needs one index per input row")
    if idx.size != np.unique(idx).size:
        raise DomainError("scatter_nodes indices must be distinct")
    if idx.size and (idx.min() < 0 or idx.max() >= num_nodes):
        raise DomainError(f"scatter_nodes index out of range for {num_nodes} nodes")
    shape = x.data.shape[:-2] + (num_nodes, x.data.shape[-1])
    buf = np.zeros(shape, dtype=np.float64)
    buf[..., idx, :] = x.data
    out = Tensor._from_op(buf, (x,), None)
    if out.requires_grad:
        def backward(g):
            x.grad += g[..., idx, :]
        out._backward = backward
    return out


def collect_parameters(named: Iterable[tuple[str, Tensor]]) -> dict[str, Tensor]:
    """Build an ordered name-to-tensor map, rejecting duplicate names."""
    out: dict[str, Tensor] = {}
    for name, t in named:
        if name in out:
            raise DomainError(f"duplicate parameter name {name!r}")
        out[name] = t
    return out
