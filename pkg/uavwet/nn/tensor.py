"""Reverse-mode autodiff over float64 numpy arrays.

Each op builds an output Tensor holding its parents and a `_backward` closure
that accumulates the output's adjoint into the parents. `backward()` walks the
graph once in reverse topological order.
"""
from typing import Callable, Optional, Sequence

import numpy as np

from uavwet.common.errors import NonFiniteError, ShapeError


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents: Sequence["Tensor"] = (), op: str = ""):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = tuple(_parents)
        self._backward: Callable[[], None] = lambda: None
        self.op = op

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = _unbroadcast(g, self.data.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @staticmethod
    def _result(data: np.ndarray, parents: Sequence["Tensor"], op: str) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"non-finite value produced by {op}")
        return Tensor(data, requires_grad=any(p.requires_grad for p in parents), _parents=parents, op=op)

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf with requires_grad."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=np.float64).reshape(self.data.shape) + (0.0 if self.grad is None else self.grad)
        for node in reversed(order):
            if node.grad is not None:
                node._backward()
        # intermediate adjoints are not kept
        for node in order:
            if node._parents:
                node.grad = None if node is not self else node.grad

    # ---- arithmetic ----

    def _binary(self, other, fn, op: str) -> "Tensor":
        other = Tensor._lift(other)
        try:
            data = fn(self.data, other.data)
        except ValueError as exc:
            raise ShapeError(f"{op}: shapes {self.shape} and {other.shape} do not broadcast") from exc
        return Tensor._result(data, (self, other), op)

    def __add__(self, other):
        out = self._binary(other, np.add, "add")
        a, b = out._parents

        def _backward():
            a._accum(out.grad)
            b._accum(out.grad)
        out._backward = _backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor._result(-self.data, (self,), "neg")

        def _backward():
            self._accum(-out.grad)
        out._backward = _backward
        return out

    def __sub__(self, other):
        out = self._binary(other, np.subtract, "sub")
        a, b = out._parents

        def _backward():
            a._accum(out.grad)
            b._accum(-out.grad)
        out._backward = _backward
        return out

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __mul__(self, other):
        out = self._binary(other, np.multiply, "mul")
        a, b = out._parents

        def _backward():
            a._accum(out.grad * b.data)
            b._accum(out.grad * a.data)
        out._backward = _backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        if np.any(other.data == 0.0):
            raise NonFiniteError("division by zero")
        out = self._binary(other, np.divide, "div")
        a, b = out._parents

        def _backward():
            a._accum(out.grad / b.data)
            b._accum(-out.grad * a.data / b.data ** 2)
        out._backward = _backward
        return out

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def __pow__(self, k: float):
        out = Tensor._result(self.data ** k, (self,), "pow")

        def _backward():
            self._accum(out.grad * k * self.data ** (k - 1))
        out._backward = _backward
        return out

    def __matmul__(self, other):
        other = Tensor._lift(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ShapeError(f"matmul needs >= 2-d operands, got {self.shape} @ {other.shape}")
        if self.shape[-1] != other.shape[-2]:
            raise ShapeError(f"matmul inner dims differ: {self.shape} @ {other.shape}")
        out = self._binary(other, np.matmul, "matmul")
        a, b = out._parents

        def _backward():
            a._accum(out.grad @ _swap(b.data))
            b._accum(_swap(a.data) @ out.grad)
        out._backward = _backward
        return out

    def __getitem__(self, idx):
        out = Tensor._result(self.data[idx], (self,), "slice")

        items = idx if isinstance(idx, tuple) else (idx,)
        basic = all(isinstance(i, (slice, int, type(Ellipsis), type(None))) for i in items)

        def _backward():
            g = np.zeros_like(self.data)
            if basic:
                g[idx] += out.grad
            else:
                np.add.at(g, idx, out.grad)
            self._accum(g)
        out._backward = _backward
        return out

    # ---- elementwise ----

    def tanh(self) -> "Tensor":
        t = np.tanh(self.data)
        out = Tensor._result(t, (self,), "tanh")

        def _backward():
            self._accum(out.grad * (1.0 - t ** 2))
        out._backward = _backward
        return out

    def relu(self) -> "Tensor":
        out = Tensor._result(np.maximum(self.data, 0.0), (self,), "relu")

        def _backward():
            self._accum(out.grad * (self.data > 0.0))
        out._backward = _backward
        return out

    def exp(self) -> "Tensor":
        with np.errstate(over="ignore"):
            e = np.exp(self.data)
        out = Tensor._result(e, (self,), "exp")

        def _backward():
            self._accum(out.grad * e)
        out._backward = _backward
        return out

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise NonFiniteError("log of a non-positive value")
        out = Tensor._result(np.log(self.data), (self,), "log")

        def _backward():
            self._accum(out.grad / self.data)
        out._backward = _backward
        return out

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=axis, keepdims=True)
        out = Tensor._result(s, (self,), "softmax")

        def _backward():
            g = out.grad
            self._accum(s * (g - np.sum(g * s, axis=axis, keepdims=True)))
        out._backward = _backward
        return out

    # ---- reductions and shape ----

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        out = Tensor._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")

        def _backward():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.data.shape))
        out._backward = _backward
        return out

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape) -> "Tensor":
        try:
            data = self.data.reshape(*shape)
        except ValueError as exc:
            raise ShapeError(f"cannot reshape {self.shape} to {shape}") from exc
        out = Tensor._result(data, (self,), "reshape")

        def _backward():
            self._accum(out.grad.reshape(self.data.shape))
        out._backward = _backward
        return out

    def transpose(self) -> "Tensor":
        """Swap the last two axes."""
        if self.ndim < 2:
            raise ShapeError(f"transpose needs >= 2-d, got {self.shape}")
        out = Tensor._result(_swap(self.data), (self,), "transpose")

        def _backward():
            self._accum(_swap(out.grad))
        out._backward = _backward
        return out

    @property
    def T(self) -> "Tensor":
        return self.transpose()


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [Tensor._lift(p) for p in parts]
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]}") from exc
    out = Tensor._result(data, parts, "concat")
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def _backward():
        for p, g in zip(parts, np.split(out.grad, bounds, axis=axis)):
            p._accum(g)
    out._backward = _backward
    return out


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; ties send the adjoint to `a`."""
    a, b = Tensor._lift(a), Tensor._lift(b)
    try:
        data = np.minimum(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"minimum: shapes {a.shape} and {b.shape} do not broadcast") from exc
    out = Tensor._result(data, (a, b), "minimum")

    def _backward():
        pick_a = a.data <= b.data
        a._accum(out.grad * pick_a)
        b._accum(out.grad * ~pick_a)
    out._backward = _backward
    return out


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def numeric_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function, for gradient checks."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        hi = f(x)
        x[i] = orig - eps
        lo = f(x)
        x[i] = orig
        g[i] = (hi - lo) / (2.0 * eps)
    return g
