"""Dense float64 tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients record their parents and a vector-Jacobian closure; calling
:meth:`Tensor.backward` on a scalar result linearises the recorded graph into a
:class:`Tape` and replays it in reverse.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import InvalidDimensionError, NumericalError

VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericalError(f"non-finite value produced by {op}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "op")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, *, _parents: tuple = (),
                 _vjp: VJP | None = None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, op)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = _parents
        self._vjp = _vjp
        self.op = op

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return _make(self.data + other.data, (self, other),
                     lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)), "add")

    __radd__ = __add__

    def __neg__(self) -> Tensor:
        return _make(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return _make(self.data - other.data, (self, other),
                     lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)), "sub")

    def __rsub__(self, other) -> Tensor:
        return as_tensor(other) - self

    def __mul__(self, other) -> Tensor:
        other = as_tensor(other)
        x, y = self.data, other.data

        def vjp(g):
            return (_unbroadcast(g * y, x.shape) if self.requires_grad else None,
                    _unbroadcast(g * x, y.shape) if other.requires_grad else None)

        return _make(x * y, (self, other), vjp, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other) -> Tensor:
        other = as_tensor(other)
        x, y = self.data, other.data
        out = x / y
        return _make(out, (self, other),
                     lambda g: (_unbroadcast(g / y, x.shape),
                                _unbroadcast(-g * out / y, y.shape)), "div")

    def __rtruediv__(self, other) -> Tensor:
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> Tensor:
        if isinstance(exponent, Tensor):
            raise TypeError("tensor exponents are not supported")
        x = self.data
        return _make(x ** exponent, (self,),
                     lambda g: (g * exponent * x ** (exponent - 1),), "pow")

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    # -- reductions and shape ops -----------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        shape = self.shape

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return _make(self.data.sum(axis=axis, keepdims=keepdims), (self,), vjp, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        orig = self.shape
        return _make(self.data.reshape(shape), (self,), lambda g: (g.reshape(orig),), "reshape")

    def transpose(self, *axes) -> Tensor:
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = np.argsort(axes)
        return _make(self.data.transpose(axes), (self,),
                     lambda g: (g.transpose(inverse),), "transpose")

    @property
    def T(self) -> Tensor:
        return self.transpose()

    def __getitem__(self, index) -> Tensor:
        if isinstance(index, Tensor):
            index = index.data.astype(np.intp)
        shape = self.shape
        return _make(self.data[index], (self,), lambda g: (_SliceGrad(index, g, shape),), "getitem")

    # -- elementwise nonlinearities ---------------------------------------
    def exp(self) -> Tensor:
        out = np.exp(self.data)
        return _make(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> Tensor:
        x = self.data
        if (x <= 0).any():
            raise NumericalError("log of non-positive value")
        return _make(np.log(x), (self,), lambda g: (g / x,), "log")

    def tanh(self) -> Tensor:
        out = np.tanh(self.data)
        return _make(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def sigmoid(self) -> Tensor:
        out = _sigmoid(self.data)
        return _make(out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")

    def silu(self) -> Tensor:
        x = self.data
        s = _sigmoid(x)
        return _make(x * s, (self,), lambda g: (g * (s + x * s * (1.0 - s)),), "silu")

    # -- backward ---------------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> Tape:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable tensor.

        Returns the tape that was replayed, in forward (topological) order.
        """
        if grad is None:
            if self.size != 1:
                raise InvalidDimensionError("backward() without a seed needs a scalar output")
            grad = np.ones(self.shape)
        tape = Tape.from_root(self)
        tape.replay(self, np.asarray(grad, dtype=np.float64))
        return tape


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp: VJP, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, _parents=parents, _vjp=vjp, op=op)
    return Tensor(data, op=op)


class Tape:
    """Topologically ordered record of the nodes that led to a root tensor."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def from_root(cls, root: Tensor) -> Tape:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def replay(self, root: Tensor, seed: np.ndarray) -> None:
        grads: dict[int, np.ndarray] = {id(root): seed}
        owned: set[int] = set()  # buffers allocated here, safe to update in place
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                g = np.zeros(node.shape)
            node.grad = g if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if isinstance(pg, _SliceGrad):
                    if key not in grads:
                        grads[key] = np.zeros(pg.shape)
                        owned.add(key)
                    elif key not in owned:
                        grads[key] = grads[key].copy()
                        owned.add(key)
                    pg.add_into(grads[key])
                elif key in grads:
                    if key in owned:
                        grads[key] += pg
                    else:
                        grads[key] = grads[key] + pg
                        owned.add(key)
                else:
                    grads[key] = pg


class _SliceGrad:
    """Gradient of an indexing op, scattered lazily into the parent's buffer."""

    __slots__ = ("index", "grad", "shape")

    def __init__(self, index, grad: np.ndarray, shape: tuple[int, ...]):
        self.index, self.grad, self.shape = index, grad, shape

    def add_into(self, buffer: np.ndarray) -> None:
        parts = self.index if isinstance(self.index, tuple) else (self.index,)
        if all(p is None or p is Ellipsis or isinstance(p, (int, np.integer, slice)) for p in parts):
            buffer[self.index] += self.grad
        else:
            np.add.at(buffer, self.index, self.grad)


# -- free functions --------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise InvalidDimensionError("matmul operands must be at least 2-D")
    x, y = a.data, b.data
    if x.shape[-1] != y.shape[-2]:
        raise InvalidDimensionError(f"matmul shape mismatch {x.shape} @ {y.shape}")

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(y, -1, -2), x.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(x, -1, -2) @ g, y.shape) if b.requires_grad else None
        return ga, gb

    return _make(x @ y, (a, b), vjp, "matmul")


def einsum(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum. Every index of an operand must appear in the output
    or in the other operand (no operand-private summed indices)."""
    a, b = as_tensor(a), as_tensor(b)
    inputs, out = subscripts.replace(" ", "").split("->")
    sa, sb = inputs.split(",")
    for own, other in ((sa, sb), (sb, sa)):
        if any(c not in out and c not in other for c in own):
            raise InvalidDimensionError(f"unsupported einsum pattern {subscripts!r}")
    x, y = a.data, b.data

    def vjp(g):
        return (np.einsum(f"{out},{sb}->{sa}", g, y), np.einsum(f"{sa},{out}->{sb}", x, g))

    return _make(np.einsum(subscripts, x, y), (a, b), vjp, "einsum")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), vjp, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), vjp, "stack")


def cross(a, b) -> Tensor:
    """Cross product over the last axis (size 3)."""
    a, b = as_tensor(a), as_tensor(b)
    x, y = a.data, b.data
    out = np.cross(x, y)

    def vjp(g):
        return (_unbroadcast(np.cross(y, g), x.shape), _unbroadcast(np.cross(g, x), y.shape))

    return _make(out, (a, b), vjp, "cross")


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    shifted = np.exp(x - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = (np.log(total) + m).squeeze(axis)

    def vjp(g):
        return (np.expand_dims(g, axis) * shifted / total,)

    return _make(out, (a,), vjp, "logsumexp")


def parameters_zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
