"""Dense tensors with define-by-run reverse-mode differentiation.

Every primitive returns a new :class:`Tensor` holding its value, its parent
tensors and a closure mapping the output gradient to parent gradients.
:func:`backward` walks that graph once in reverse topological order.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph."""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


class ShapeError(ValueError):
    """Inputs to a primitive do not conform."""


class GradCheckError(RuntimeError):
    """Function value was not finite at a perturbed coordinate."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None,
                 _parents=(), _backward=None):
        if dtype is None and isinstance(data, (np.ndarray, np.floating)) and data.dtype.kind == "f":
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if like is not None:
        return Tensor(np.asarray(x, dtype=like.data.dtype))
    if isinstance(x, (np.ndarray, np.floating)) and x.dtype.kind == "f":
        return Tensor(x)
    return Tensor(np.asarray(x, dtype=DEFAULT_DTYPE))


def _make(value, parents, backward) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(value, True, _parents=parents, _backward=backward)
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary_operands(op: str, a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = _wrap(a, b if isinstance(b, Tensor) else None)
    if not isinstance(b, Tensor):
        b = _wrap(b, a)
    return a, b


def _shape_error(op, a, b):
    return ShapeError(f"{op}: cannot broadcast shapes {np.shape(_raw(a))} and {np.shape(_raw(b))}")


def _raw(x):
    return x.data if isinstance(x, Tensor) else x


_SCALARS = (int, float, np.floating)


# primitives ---------------------------------------------------------------

def add(a, b) -> Tensor:
    if isinstance(b, _SCALARS) and isinstance(a, Tensor):
        return _make(a.data + b, (a,), lambda g: (g,))
    if isinstance(a, _SCALARS) and isinstance(b, Tensor):
        return _make(a + b.data, (b,), lambda g: (g,))
    a, b = _binary_operands("add", a, b)
    sa, sb = a.data.shape, b.data.shape
    try:
        out = a.data + b.data
    except ValueError:
        raise _shape_error("add", a, b) from None
    return _make(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    if isinstance(b, _SCALARS) and isinstance(a, Tensor):
        return _make(a.data - b, (a,), lambda g: (g,))
    if isinstance(a, _SCALARS) and isinstance(b, Tensor):
        return _make(a - b.data, (b,), lambda g: (-g,))
    a, b = _binary_operands("sub", a, b)
    sa, sb = a.data.shape, b.data.shape
    try:
        out = a.data - b.data
    except ValueError:
        raise _shape_error("sub", a, b) from None
    return _make(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    if isinstance(a, _SCALARS) and isinstance(b, Tensor):
        a, b = b, a
    if isinstance(b, _SCALARS) and isinstance(a, Tensor):
        return _make(a.data * b, (a,), lambda g: (g * b,))
    a, b = _binary_operands("mul", a, b)
    av, bv = a.data, b.data
    try:
        out = av * bv
    except ValueError:
        raise _shape_error("mul", a, b) from None
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b) -> Tensor:
    if isinstance(b, _SCALARS) and isinstance(a, Tensor):
        return _make(a.data / b, (a,), lambda g: (g / b,))
    if isinstance(a, _SCALARS) and isinstance(b, Tensor):
        bv = b.data
        out = a / bv
        return _make(out, (b,), lambda g: (-g * out / bv,))
    a, b = _binary_operands("div", a, b)
    av, bv = a.data, b.data
    try:
        out = av / bv
    except ValueError:
        raise _shape_error("div", a, b) from None

    def backward(g):
        ga = g / bv
        return _unbroadcast(ga, av.shape), _unbroadcast(-ga * out, bv.shape)

    return _make(out, (a, b), backward)


def neg(a) -> Tensor:
    a = _wrap(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a = _wrap(a, b if isinstance(b, Tensor) else None)
    b = _wrap(b, a)
    av, bv = a.data, b.data
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _make(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _wrap(a)
    av = a.data
    return _make(np.log(av), (a,), lambda g: (g / av,))


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    a = _wrap(a)
    av = a.data
    out = np.logaddexp(av.dtype.type(0), av)

    def backward(g):
        return (g * (0.5 * (1.0 + np.tanh(0.5 * av))),)

    return _make(out, (a,), backward)


def square(a) -> Tensor:
    a = _wrap(a)
    av = a.data
    return _make(av * av, (a,), lambda g: (2.0 * g * av,))


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    av = a.data
    out = av ** exponent
    return _make(out, (a,), lambda g: (g * exponent * av ** (exponent - 1),))


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    shape = a.data.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    shape = a.data.shape
    count = a.data.size if axis is None else np.prod([shape[i] for i in np.atleast_1d(axis)])

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape),)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward)


def concat(tensors: Sequence, axis=0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no inputs")
    ref = tensors[0].data
    for t in tensors[1:]:
        d = t.data
        if d.ndim != ref.ndim or any(
                d.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != axis % ref.ndim):
            raise ShapeError(f"concat: incompatible shapes {tensors[0].shape} and {t.shape}")
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def slice_(a, index) -> Tensor:
    a = _wrap(a)
    av = a.data
    try:
        out = av[index]
    except IndexError as exc:
        raise ShapeError(f"slice: index {index!r} invalid for shape {a.shape}") from exc

    def backward(g):
        full = np.zeros_like(av)
        if _has_fancy(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _make(out, (a,), backward)


def _has_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    old = a.data.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} to {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(old),))


PRIMITIVES: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "exp": exp,
    "log": log,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "sum": sum_,
    "mean": mean,
    "square": square,
    "power": power,
    "concat": lambda *ts, axis=0: concat(ts, axis=axis),
    "slice": slice_,
    "reshape": reshape,
}


def apply_primitive(op: str, *inputs, **kwargs) -> Tensor:
    """Apply the named primitive; unknown names raise ``KeyError``."""
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        raise KeyError(f"unknown primitive {op!r}") from None
    return fn(*inputs, **kwargs)


# backward -----------------------------------------------------------------

def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        for p in parents:
            if p.requires_grad and id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                break
        else:
            stack.pop()
            order.append(node)
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tensor reachable from ``loss`` that tracks gradients.

    Leaf gradients accumulate across calls; clear them with ``zero_grad`` or
    an optimizer step.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    # fresh buffers for interior nodes, accumulate into leaves
    for node in order:
        if node._backward is not None:
            node.grad = None
    seed = np.ones_like(loss.data)
    loss.grad = seed if loss.grad is None else loss.grad + seed
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if not parent.requires_grad or g is None:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, dtype=parent.data.dtype)
            else:
                parent.grad = parent.grad + g


def grad_check(fn: Callable[[Tensor], Tensor], point, step: float = 1e-4) -> float:
    """Max relative error between the analytic gradient and central differences.

    The relative error per coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.
    Evaluation is done in float64.
    """
    base = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)
    x = Tensor(base.copy(), requires_grad=True)
    out = fn(x)
    backward(out)
    analytic = np.zeros_like(base) if x.grad is None else np.asarray(x.grad, dtype=np.float64)

    flat = base.reshape(-1)
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        values = []
        for sign in (1.0, -1.0):
            shifted = flat.copy()
            shifted[i] += sign * step
            v = float(fn(Tensor(shifted.reshape(base.shape))).data)
            if not np.isfinite(v):
                raise GradCheckError(f"non-finite function value at coordinate {i}", i)
            values.append(v)
        numeric[i] = (values[0] - values[1]) / (2.0 * step)

    analytic = analytic.reshape(-1)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
