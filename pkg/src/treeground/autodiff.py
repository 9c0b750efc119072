"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a numpy array and records, for every operation whose
inputs require gradients, a closure that propagates adjoints backwards.
Calling :meth:`Tensor.backward` on a scalar output runs the closures in
reverse topological order and accumulates ``.grad`` on every node that
requires a gradient.

Everything is float64: the gradient checks this package relies on are
run at 1e-4 relative tolerance, which float32 cannot support.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, NumericError

# When True, every op output is checked for NaN/Inf at creation time.
# Training checks losses, gradients and parameters once per pass instead,
# which keeps the per-op cost out of the hot loop.
STRICT_FINITE = False


def _as_array(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` along axes that were broadcast."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Dense float64 tensor participating in reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = ()
        if STRICT_FINITE and not np.all(np.isfinite(self.data)):
            raise NumericError("non-finite values in tensor")

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def check_finite(self, what: str = "tensor"):
        if not np.all(np.isfinite(self.data)):
            raise NumericError(f"non-finite values in {what}")
        return self

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _lift(value):
        return value if isinstance(value, Tensor) else Tensor(value)

    def _make(self, data, parents, backward):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._prev = tuple(parents)
            out._backward = backward
        else:
            out._prev = ()
            out._backward = None
        if STRICT_FINITE and not np.all(np.isfinite(data)):
            raise NumericError("non-finite values in op output")
        return out

    def _accumulate(self, grad):
        if self.requires_grad:
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            self.grad += grad

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = self._lift(other)
        out_data = self.data + other.data

        def backward(g):
            self._accumulate(_unbroadcast(g, self.data.shape))
            other._accumulate(_unbroadcast(g, other.data.shape))

        return self._make(out_data, (self, other), backward)

    __radd__ = __add__

    def __mul__(self, other):
        other = self._lift(other)
        out_data = self.data * other.data
        a, b = self.data, other.data

        def backward(g):
            self._accumulate(_unbroadcast(g * b, a.shape))
            other._accumulate(_unbroadcast(g * a, b.shape))

        return self._make(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)

        return self._make(-self.data, (self,), backward)

    def __sub__(self, other):
        other = self._lift(other)
        out_data = self.data - other.data

        def backward(g):
            self._accumulate(_unbroadcast(g, self.data.shape))
            other._accumulate(_unbroadcast(-g, other.data.shape))

        return self._make(out_data, (self, other), backward)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise ContractViolation("division only supported by python scalars")
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        other = self._lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ContractViolation(
                f"matmul expects 2-D operands, got {self.data.shape} @ {other.data.shape}"
            )
        if self.data.shape[1] != other.data.shape[0]:
            raise ContractViolation(
                f"matmul shape mismatch: {self.data.shape} @ {other.data.shape}"
            )
        a, b = self.data, other.data

        def backward(g):
            self._accumulate(g @ b.T)
            other._accumulate(a.T @ g)

        return self._make(a @ b, (self, other), backward)

    def square(self):
        a = self.data

        def backward(g):
            self._accumulate(2.0 * a * g)

        return self._make(a * a, (self,), backward)

    # -- nonlinearities -------------------------------------------------------

    def sigmoid(self):
        out_data = _sigmoid(self.data)

        def backward(g):
            self._accumulate(g * out_data * (1.0 - out_data))

        return self._make(out_data, (self,), backward)

    def tanh(self):
        out_data = np.tanh(self.data)

        def backward(g):
            self._accumulate(g * (1.0 - out_data * out_data))

        return self._make(out_data, (self,), backward)

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g):
            self._accumulate(g * out_data)

        return self._make(out_data, (self,), backward)

    def log(self):
        a = self.data

        def backward(g):
            self._accumulate(g / a)

        return self._make(np.log(a), (self,), backward)

    def softplus(self):
        # max(x,0) + log1p(exp(-|x|)) is overflow-safe; derivative is sigmoid.
        a = self.data
        out_data = np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))

        def backward(g):
            self._accumulate(g * _sigmoid(a))

        return self._make(out_data, (self,), backward)

    def log_softmax(self):
        """Row-wise log-softmax along the last axis (numerically stable)."""
        a = self.data
        shifted = a - a.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        out_data = shifted - lse
        probs = np.exp(out_data)

        def backward(g):
            self._accumulate(g - probs * g.sum(axis=-1, keepdims=True))

        return self._make(out_data, (self,), backward)

    # -- shape ops ------------------------------------------------------------

    def sum(self, axis=None):
        in_shape = self.data.shape

        def backward(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, in_shape).copy())
            else:
                self._accumulate(np.broadcast_to(np.expand_dims(g, axis), in_shape).copy())

        return self._make(self.data.sum(axis=axis), (self,), backward)

    def reshape(self, *shape):
        in_shape = self.data.shape

        def backward(g):
            self._accumulate(g.reshape(in_shape))

        return self._make(self.data.reshape(*shape), (self,), backward)

    # -- backward pass ---------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ContractViolation("backward() requires a scalar output")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Piecewise form avoids overflow in exp for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate tensors along ``axis``; gradients split back."""
    tensors = [Tensor._lift(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(g[tuple(idx)])

    return tensors[0]._make(data, tuple(tensors), backward)


def softmax(logits: Tensor) -> Tensor:
    return logits.log_softmax().exp()
