"""Dense float64 tensors with reverse-mode differentiation on a recorded tape.

A ``Tensor`` wraps a numpy float64 array. While a ``GradientTape`` is active
(as a context manager), every primitive executed on tensors appends one record
to the tape: the output, the inputs, and a closure that maps the output
gradient to input gradients. ``backward`` replays the records in reverse
execution order, which is a valid topological order, accumulating gradients
additively whenever a tensor feeds several consumers.

The primitive set is deliberately small: matrix multiply, broadcast
add/subtract/multiply/divide, negation, sigmoid, tanh, absolute value,
concatenate, reshape, and sum/mean reductions. That is exactly what the
layers, the loss, and the metrics need; this is not a general autodiff.

Everything is float64 and deterministic: two backward passes over the same
tape produce bit-identical gradients.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, ShapeMismatchError

__all__ = [
    "Tensor",
    "GradientTape",
    "ParameterSet",
    "as_tensor",
    "backward",
    "matmul",
    "add",
    "subtract",
    "multiply",
    "divide",
    "negate",
    "sigmoid",
    "tanh",
    "absolute",
    "concat",
    "reshape",
    "reduce_sum",
    "reduce_mean",
    "primitive_forward",
]


class Tensor:
    """A dense float64 array participating in tape-recorded arithmetic."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    # operator sugar; every overload routes through the recorded primitives
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return negate(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class _Record:
    """One executed primitive: output, inputs, and the local backward map."""

    __slots__ = ("out", "inputs", "grad_fn")

    def __init__(self, out: Tensor, inputs: Sequence[Tensor], grad_fn: Callable):
        self.out = out
        self.inputs = tuple(inputs)
        self.grad_fn = grad_fn


class GradientTape:
    """Ordered record of executed primitives.

    Use as a context manager; primitives executed inside the block are
    recorded. Tapes may nest — only the innermost active tape records.
    """

    def __init__(self):
        self._records: list[_Record] = []

    def __enter__(self) -> "GradientTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self) -> int:
        return len(self._records)

    def gradients(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Map id(tensor) -> gradient of ``loss`` for every tensor on the tape."""
        if loss.size != 1:
            raise ContractError(
                f"backward requires a scalar loss, got shape {loss.shape}"
            )
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self._records):
            g_out = grads.get(id(rec.out))
            if g_out is None:
                continue
            for inp, g_in in zip(rec.inputs, rec.grad_fn(g_out)):
                if g_in is None:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g_in
                else:
                    grads[key] = g_in
        return grads


_TAPE_STACK: list[GradientTape] = []


def _record(out: Tensor, inputs: Sequence[Tensor], grad_fn: Callable) -> Tensor:
    if _TAPE_STACK:
        _TAPE_STACK[-1]._records.append(_Record(out, inputs, grad_fn))
    return out


class ParameterSet:
    """Named parameters plus matching gradient slots, in insertion order."""

    def __init__(self, values: dict[str, Tensor] | None = None):
        self._values: dict[str, Tensor] = {}
        self._grads: dict[str, np.ndarray] = {}
        if values:
            for name, tensor in values.items():
                self.add(name, tensor)

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._values:
            raise ContractError(f"duplicate parameter name {name!r}")
        self._values[name] = tensor
        self._grads[name] = np.zeros_like(tensor.data)
        return tensor

    def names(self) -> list[str]:
        return list(self._values)

    def value(self, name: str) -> Tensor:
        return self._values[name]

    def __getitem__(self, name: str) -> Tensor:
        return self._values[name]

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __len__(self) -> int:
        return len(self._values)

    def items(self):
        return self._values.items()

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def set_grad(self, name: str, grad: np.ndarray) -> None:
        expected = self._values[name].data.shape
        if grad.shape != expected:
            raise ShapeMismatchError(
                f"gradient slot for {name!r}: {grad.shape} vs parameter {expected}"
            )
        self._grads[name] = grad

    def zero_grads(self) -> None:
        for name, tensor in self._values.items():
            self._grads[name] = np.zeros_like(tensor.data)

    def flatten_values(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self._values.values()])


def backward(loss: Tensor, tape: GradientTape, params: ParameterSet) -> ParameterSet:
    """Fill every parameter's gradient slot with d(loss)/d(parameter).

    Parameters unreachable from the loss get a zero gradient. The tape is
    left untouched, so repeated calls give bit-identical results.
    """
    grads = tape.gradients(loss)
    for name, tensor in params.items():
        g = grads.get(id(tensor))
        if g is None:
            params.set_grad(name, np.zeros_like(tensor.data))
        else:
            params.set_grad(name, np.asarray(g, dtype=np.float64))
    return params


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(f"{op}: {a.shape} vs {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a.data, b.data)
    out = Tensor(a.data + b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def subtract(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("subtract", a.data, b.data)
    out = Tensor(a.data - b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def multiply(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("multiply", a.data, b.data)
    out = Tensor(a.data * b.data)
    return _record(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def divide(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("divide", a.data, b.data)
    out = Tensor(a.data / b.data)
    return _record(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def negate(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Matrix product with numpy semantics (leading axes broadcast).

    1-D operands are supported the numpy way: a 1-D left operand acts as a
    row vector, a 1-D right operand as a column vector, and the contracted
    axis is squeezed from the result.
    """
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0:
        raise ShapeMismatchError(f"matmul: {ad.shape} vs {bd.shape}")
    a2 = ad.reshape(1, -1) if ad.ndim == 1 else ad
    b2 = bd.reshape(-1, 1) if bd.ndim == 1 else bd
    if a2.shape[-1] != b2.shape[-2]:
        raise ShapeMismatchError(f"matmul: {ad.shape} vs {bd.shape}")
    raw = np.matmul(a2, b2)
    out_data = raw
    if bd.ndim == 1:
        out_data = out_data[..., 0]
    if ad.ndim == 1:
        out_data = out_data[..., 0, :] if out_data.ndim > 1 else out_data[0]
    out = Tensor(out_data)

    def grad_fn(g):
        g2 = g.reshape(raw.shape)
        ga = np.matmul(g2, np.swapaxes(b2, -1, -2))
        gb = np.matmul(np.swapaxes(a2, -1, -2), g2)
        return (
            _unbroadcast(ga, a2.shape).reshape(ad.shape),
            _unbroadcast(gb, b2.shape).reshape(bd.shape),
        )

    return _record(out, (a, b), grad_fn)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # evaluate from the side that cannot overflow
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(s)
    return _record(out, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    out = Tensor(t)
    return _record(out, (a,), lambda g: (g * (1.0 - t * t),))


def absolute(a) -> Tensor:
    # gradient at exactly zero is zero (np.sign(0) == 0)
    a = as_tensor(a)
    out = Tensor(np.abs(a.data))
    return _record(out, (a,), lambda g: (g * np.sign(a.data),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat of an empty sequence")
    try:
        out_data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeMismatchError(
            "concat: " + " vs ".join(str(p.data.shape) for p in parts)
        ) from None
    out = Tensor(out_data)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def grad_fn(g):
        sl = [slice(None)] * g.ndim
        pieces = []
        for i in range(len(parts)):
            sl[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(g[tuple(sl)])
        return tuple(pieces)

    return _record(out, parts, grad_fn)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    return _record(out, (a,), lambda g: (g.reshape(a.data.shape),))


def _reduce(a, op: str, axis, keepdims: bool) -> Tensor:
    a = as_tensor(a)
    if op == "sum":
        out_data = a.data.sum(axis=axis, keepdims=keepdims)
        scale = 1.0
    else:
        out_data = a.data.mean(axis=axis, keepdims=keepdims)
        if axis is None:
            scale = 1.0 / a.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            scale = 1.0 / np.prod([a.data.shape[i] for i in axes])
    out = Tensor(out_data)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis=axis)
        return (np.broadcast_to(g, a.data.shape) * scale,)

    return _record(out, (a,), grad_fn)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    return _reduce(a, "sum", axis, keepdims)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    return _reduce(a, "mean", axis, keepdims)


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "subtract": subtract,
    "multiply": multiply,
    "divide": divide,
    "negate": negate,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "abs": absolute,
    "concat": concat,
    "reshape": reshape,
    "sum": reduce_sum,
    "mean": reduce_mean,
}


def primitive_forward(kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch a primitive by name; same recording and shape rules apply."""
    try:
        fn = _PRIMITIVES[kind]
    except KeyError:
        raise ContractError(
            f"unknown primitive {kind!r}; known: {sorted(_PRIMITIVES)}"
        ) from None
    return fn(*inputs, **kwargs)
