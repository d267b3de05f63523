"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every op records its parents and a backward function mapping the output
gradient to one gradient per parent. ``Tensor.backward`` walks the graph in
reverse topological order and accumulates into leaf tensors' ``grad``.
"""

from collections.abc import Callable

import numpy as np

Backward = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over the axes that broadcasting expanded to reach its shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Backward | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @staticmethod
    def _op(data: np.ndarray, parents: tuple["Tensor", ...], backward: Backward) -> "Tensor":
        if any(p.requires_grad for p in parents):
            return Tensor(data, True, parents, backward)
        return Tensor(data)

    # ── arithmetic ──

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor._op(self.data + other.data, (self, other), lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        x, y = self.data, other.data
        return Tensor._op(
            x * y,
            (self, other),
            lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        x, y = self.data, other.data
        return Tensor._op(
            x / y,
            (self, other),
            lambda g: (_unbroadcast(g / y, x.shape), _unbroadcast(-g * x / (y * y), y.shape)),
        )

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        x, y = self.data, other.data

        def backward(g):
            gx = g @ np.swapaxes(y, -1, -2)
            gy = np.swapaxes(x, -1, -2) @ g
            return _unbroadcast(gx, x.shape), _unbroadcast(gy, y.shape)

        return Tensor._op(x @ y, (self, other), backward)

    # ── shape ──

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._op(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self) -> "Tensor":
        return self.sum() / float(self.data.size)

    def reshape(self, *shape: int) -> "Tensor":
        original = self.shape
        return Tensor._op(self.data.reshape(*shape), (self,), lambda g: (g.reshape(original),))

    @property
    def mT(self) -> "Tensor":
        """Swap the last two axes."""
        return Tensor._op(np.swapaxes(self.data, -1, -2), (self,), lambda g: (np.swapaxes(g, -1, -2),))

    # ── elementwise ──

    def relu(self) -> "Tensor":
        x = self.data
        return Tensor._op(np.maximum(x, 0.0), (self,), lambda g: (g * (x > 0),))

    def sigmoid(self) -> "Tensor":
        s = _sigmoid(self.data)
        return Tensor._op(s, (self,), lambda g: (g * s * (1.0 - s),))

    def softplus(self) -> "Tensor":
        x = self.data
        return Tensor._op(np.logaddexp(0.0, x), (self,), lambda g: (g * _sigmoid(x),))

    def log(self) -> "Tensor":
        x = self.data
        return Tensor._op(np.log(x), (self,), lambda g: (g / x,))

    def square(self) -> "Tensor":
        x = self.data
        return Tensor._op(x * x, (self,), lambda g: (2.0 * g * x,))

    def clip(self, lo: float, hi: float) -> "Tensor":
        x = self.data
        return Tensor._op(np.clip(x, lo, hi), (self,), lambda g: (g * ((x >= lo) & (x <= hi)),))

    # ── reverse pass ──

    def backward(self, grad: np.ndarray | None = None) -> None:
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
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data) if grad is None else np.asarray(grad)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g), strict=True):
                if pg is None or not parent.requires_grad:
                    continue
                grads[id(parent)] = pg if id(parent) not in grads else grads[id(parent)] + pg


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(value) -> Tensor:
    """A leaf that collects gradients."""
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)
