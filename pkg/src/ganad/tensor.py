"""Dense float64 tensors with reverse-mode differentiation.

Every differentiable primitive builds its output together with a closure that
maps the output adjoint onto its inputs. ``backward`` orders the recorded graph
topologically and runs those closures exactly once per node.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

BCE_EPS = 1e-7

_grad_enabled = True


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(RuntimeError):
    """An operation was called outside its precondition."""


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference, detached targets)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # operator sugar; each maps onto a primitive below
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str,
          backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    out._parents = tuple(parents) if needs else ()
    out._backward = backward_fn if needs else None
    return out


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    # scalar broadcast only, so reducing means summing everything
    if g.shape == t.shape:
        return g
    return np.asarray(g.sum()).reshape(t.shape)


# ---------------------------------------------------------------- binary ops
#
# Every backward closure returns one adjoint per parent, None where the parent
# does not need one.

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(a.data + b.data, (a, b), "add",
                 lambda g: (_reduce_to(g, a), _reduce_to(g, b)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _make(a.data - b.data, (a, b), "sub",
                 lambda g: (_reduce_to(g, a), _reduce_to(-g, b)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), "mul",
                 lambda g: (_reduce_to(g * bd, a), _reduce_to(g * ad, b)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)
    return _make(ad @ bd, (a, b), "matmul", bw)


def add_bias(x, b) -> Tensor:
    """Add a length-n bias vector to every row of an m×n matrix."""
    x, b = as_tensor(x), as_tensor(b)
    if x.data.ndim != 2 or b.shape != (x.shape[1],):
        raise DimensionError(f"add_bias: bias {b.shape} does not fit rows of {x.shape}")
    return _make(x.data + b.data, (x, b), "add_bias",
                 lambda g: (g, g.sum(axis=0) if b.requires_grad else None))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: shapes {[t.shape for t in ts]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _make(data, ts, "concat",
                 lambda g: tuple(np.split(g, bounds, axis=axis)))


# ----------------------------------------------------------------- unary ops

def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), "relu", lambda g: (g * mask,))


def leaky_relu(x, alpha: float = 0.2) -> Tensor:
    x = as_tensor(x)
    slope = np.where(x.data > 0, 1.0, alpha)
    return _make(x.data * slope, (x,), "leaky_relu", lambda g: (g * slope,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (x,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _make(out, (x,), "tanh", lambda g: (g * (1.0 - out * out),))


def abs(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    sign = np.sign(x.data)
    return _make(np.abs(x.data), (x,), "abs", lambda g: (g * sign,))


def square(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    return _make(d * d, (x,), "square", lambda g: (g * 2.0 * d,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    safe = np.where(out > 0, out, 1.0)
    return _make(out, (x,), "sqrt",
                 lambda g: (np.where(out > 0, g / (2.0 * safe), 0.0),))


ACTIVATIONS: dict[str, Callable[..., Tensor]] = {
    "relu": relu,
    "leaky_relu": leaky_relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
}


def elementwise(op: str, *args, alpha: float = 0.2) -> Tensor:
    """Dispatch an elementwise primitive by name."""
    if op == "leaky_relu":
        return leaky_relu(args[0], alpha)
    table = {
        "relu": relu, "sigmoid": sigmoid, "tanh": tanh, "abs": abs, "square": square,
        "add": add, "sub": sub, "mul": mul,
    }
    if op not in table:
        raise ValueError(f"unknown elementwise op {op!r}")
    return table[op](*args)


# ---------------------------------------------------------------- reductions

def _expand(g: np.ndarray, axis: int | None) -> np.ndarray:
    return g if axis is None else np.expand_dims(g, axis)


def sum(x, axis: int | None = None) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    return _make(np.asarray(x.data.sum(axis=axis)), (x,), "sum",
                 lambda g: (np.broadcast_to(_expand(g, axis), x.shape),))


def mean(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis), 1.0 / n)


def norm(x, p: int = 2, axis: int | None = None) -> Tensor:
    """L1 or L2 norm, over everything or along one axis.

    The L2 adjoint at an exactly-zero input is zero.
    """
    x = as_tensor(x)
    if x.data.size == 0:
        raise ContractError("norm of an empty tensor")
    d = x.data
    if p == 1:
        sign = np.sign(d)
        return _make(np.asarray(np.abs(d).sum(axis=axis)), (x,), "norm1",
                     lambda g: (_expand(g, axis) * sign,))
    if p == 2:
        out = np.asarray(np.sqrt((d * d).sum(axis=axis)))
        o = _expand(out, axis)
        safe = np.where(o > 0, o, 1.0)
        return _make(out, (x,), "norm2",
                     lambda g: (np.where(o > 0, _expand(g, axis) * d / safe, 0.0),))
    raise ValueError(f"norm order must be 1 or 2, got {p}")


def bce(prediction, target, reduction: str = "mean") -> Tensor:
    """Binary cross-entropy on probabilities clamped to [eps, 1-eps].

    The clamp is transparent to the adjoint, which is evaluated at the clamped
    value so saturated predictions still pass a gradient back.
    """
    p, t = as_tensor(prediction), as_tensor(target)
    if p.shape != t.shape:
        if not _is_scalar(t):
            raise DimensionError(f"bce: prediction {p.shape} vs target {t.shape}")
        t = Tensor(np.full(p.shape, t.data.reshape(-1)[0]))
    pc = np.clip(p.data, BCE_EPS, 1.0 - BCE_EPS)
    td = t.data
    per = -(td * np.log(pc) + (1.0 - td) * np.log(1.0 - pc))
    dper = (pc - td) / (pc * (1.0 - pc))
    if reduction == "mean":
        n = per.size
        return _make(np.asarray(per.sum() / n), (p,), "bce", lambda g: (g * dper / n,))
    if reduction == "none":
        return _make(per, (p,), "bce", lambda g: (g * dper,))
    raise ValueError(f"unknown reduction {reduction!r}")


# ------------------------------------------------------------------ backward

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    Gradients accumulate across calls until zeroed.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any tensor requiring grad")

    adj: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = adj.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            # leaf
            if node.requires_grad:
                g = np.array(g, dtype=np.float64).reshape(node.shape)
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = adj.get(id(parent))
            adj[id(parent)] = pg if prev is None else prev + pg
