"""Dense float64 tensors and a minimal reverse-mode differentiation graph.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure mapping the upstream gradient to gradients for those parents.  The
graph is rebuilt on every forward pass; :meth:`Tensor.backward` may be called
once per graph.  Leaf gradients accumulate across graphs until
:meth:`Tensor.zero_grad` is called.

Operations accept leading batch dimensions where noted, so one graph can cover
a whole mini-batch.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

from . import _kernels
from .errors import ConfigError, DimensionError, GraphError, LabelError, NonFiniteError

LOG_EPS = 1e-12
NORM_EPS = 1e-12
SIMPLEX_TOL = 1e-9

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Evaluate operations without recording the graph (per thread)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """A float64 array node in the differentiation graph.

    Parameters
    ----------
    data : array_like
        Values; converted to a float64 array.  Must be finite.
    requires_grad : bool
        Whether gradients should be accumulated into ``grad`` for this leaf.
    name : str, optional
        Label used in error messages and checkpoints.
    """

    __slots__ = ("_data", "grad", "requires_grad", "name", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        arr = np.array(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite value in tensor {name or ''}".rstrip())
        self._data = arr
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self.name = name
        # intermediate nodes receive their grad during backward()
        self.grad = np.zeros_like(arr) if self.requires_grad and _backward is None else None
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, value):
        arr = np.array(value, dtype=np.float64)
        if arr.shape != self._data.shape:
            raise DimensionError(f"cannot change tensor shape {self._data.shape} -> {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite value assigned to tensor {self.name or ''}".rstrip())
        self._data = arr

    @property
    def shape(self):
        return self._data.shape

    @property
    def ndim(self):
        return self._data.ndim

    def item(self) -> float:
        return float(self._data.reshape(-1)[0]) if self._data.size == 1 else self._data.item()

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def zero_grad(self):
        self.grad = np.zeros_like(self._data) if self.requires_grad else None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)

    def backward(self):
        """Backpropagate from this scalar node into every reachable leaf."""
        if self._data.size != 1:
            raise GraphError(f"backward() needs a scalar root, got shape {self.shape}")
        if self._consumed:
            raise GraphError("graph already backpropagated; rebuild it with a new forward pass")
        if not self.requires_grad:
            raise GraphError("root does not depend on any tensor requiring grad")

        order = _topological_order(self)
        pending = {id(self): np.ones_like(self._data)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad += g
                continue
            node.grad = g
            node._consumed = True
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    if not grad_enabled():
        return Tensor(data)
    return Tensor(data, _parents=tuple(parents), _backward=backward)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ----------------------------------------------------------------------------
# elementwise and structural ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"add: {a.shape} vs {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"mul: {a.shape} vs {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(out, (a, b), backward)


def tsum(x: Tensor, axis=None) -> Tensor:
    out = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _node(out, (x,), backward)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(x.shape),)

    return _node(out, (x,), backward)


def getitem(x: Tensor, index) -> Tensor:
    out = x.data[index]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _node(out, (x,), backward)


def tabs(x: Tensor) -> Tensor:
    """Elementwise absolute value; subgradient 0 at 0."""

    def backward(g):
        return (g * np.sign(x.data),)

    return _node(np.abs(x.data), (x,), backward)


def l2norm(x: Tensor, axis) -> Tensor:
    """Euclidean norm along ``axis``; the gradient is 0 where the norm is below 1e-12."""
    norm = np.sqrt(np.sum(x.data * x.data, axis=axis))

    def backward(g):
        safe = np.where(norm < NORM_EPS, np.inf, norm)
        return (np.expand_dims(g / safe, axis) * x.data,)

    return _node(norm, (x,), backward)


# ----------------------------------------------------------------------------
# linear algebra


def matvec(M, v) -> Tensor:
    """Matrix-vector product ``M @ v`` over shapes ``(..., m, n)`` and ``(..., n)``.

    Leading dimensions broadcast against each other.
    """
    M, v = as_tensor(M), as_tensor(v)
    if M.ndim < 2 or v.ndim < 1 or M.shape[-1] != v.shape[-1]:
        raise DimensionError(f"matvec: {M.shape} @ {v.shape}")
    try:
        out = np.matmul(M.data, v.data[..., None])[..., 0]
    except ValueError as exc:
        raise DimensionError(f"matvec: {M.shape} @ {v.shape}") from exc

    def backward(g):
        gM = g[..., :, None] * v.data[..., None, :]
        gv = np.matmul(np.swapaxes(M.data, -1, -2), g[..., None])[..., 0]
        return _unbroadcast(gM, M.shape), _unbroadcast(gv, v.shape)

    return _node(out, (M, v), backward)


def conv1d_temporal(x, weight, bias) -> Tensor:
    """Temporal convolution with zero "same" padding.

    Shapes::

        x       (C_in, T) | (N, C_in, T) | (N, G, C_in, T)
        weight  (C_out, C_in, k)          | (G, C_out, C_in, k)
        bias    (C_out,)                  | (G, C_out)

    A 4-d ``x`` pairs with a 4-d ``weight``: channel group ``g`` of every
    sample is convolved with ``weight[g]``.  ``k`` must be odd, so the output
    keeps length ``T``.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if weight.ndim == 2:
        weight = reshape(weight, weight.shape + (1,))
    k = weight.shape[-1]
    if k % 2 == 0:
        raise ConfigError(f"conv1d_temporal: kernel size must be odd, got {k}")
    grouped = weight.ndim == 4
    if grouped:
        if x.ndim != 4 or x.shape[1] != weight.shape[0]:
            raise DimensionError(f"conv1d_temporal: grouped weight {weight.shape} needs x (N, G, C_in, T), got {x.shape}")
        if bias.shape != weight.shape[:2]:
            raise DimensionError(f"conv1d_temporal: bias {bias.shape} vs weight {weight.shape}")
        x4, w4, b2 = x.data, weight.data, bias.data
    else:
        if weight.ndim != 3 or x.ndim not in (2, 3):
            raise DimensionError(f"conv1d_temporal: x {x.shape} with weight {weight.shape}")
        if bias.shape != weight.shape[:1]:
            raise DimensionError(f"conv1d_temporal: bias {bias.shape} vs weight {weight.shape}")
        x4 = x.data.reshape((-1, 1) + x.shape[-2:])
        w4, b2 = weight.data[None], bias.data[None]
    if x4.shape[2] != w4.shape[2]:
        raise DimensionError(f"conv1d_temporal: x has {x4.shape[2]} channels, weight expects {w4.shape[2]}")
    if x4.shape[3] < 1:
        raise DimensionError("conv1d_temporal: empty temporal axis")

    out4 = _kernels.conv1d_forward(x4, w4, b2)
    out = out4 if grouped else out4.reshape(x.shape[:-2] + out4.shape[-2:])

    def backward(g):
        g4 = g if grouped else g.reshape(out4.shape)
        gx, gw, gb = _kernels.conv1d_backward(x4, w4, g4)
        if not grouped:
            gx, gw, gb = gx.reshape(x.shape), gw[0], gb[0]
        return gx, gw, gb

    return _node(out, (x, weight, bias), backward)


# ----------------------------------------------------------------------------
# activations and loss


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return _node(x.data * mask, (x,), backward)


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)

    def backward(g):
        return (g * s * (1.0 - s),)

    return _node(s, (x,), backward)


def softmax(x: Tensor, axis=-1) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] < 1:
        raise DimensionError("softmax needs at least one entry along its axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (p * (g - np.sum(g * p, axis=axis, keepdims=True)),)

    return _node(p, (x,), backward)


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "softmax": softmax}


def activation(kind: str, x) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(as_tensor(x))


def cross_entropy(p, y) -> Tensor:
    """Per-sample ``-log(p[y] + 1e-12)`` for simplex rows ``p`` of shape ``(..., c)``.

    ``y`` is an integer or integer array matching ``p.shape[:-1]``.
    """
    p = as_tensor(p)
    y = np.asarray(y)
    c = p.shape[-1]
    if y.shape != p.shape[:-1]:
        raise DimensionError(f"cross_entropy: labels {y.shape} vs predictions {p.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise LabelError(f"cross_entropy: labels must be integers, got {y.dtype}")
    if np.any((y < 0) | (y >= c)):
        raise LabelError(f"cross_entropy: label out of range [0, {c})")
    if np.any(np.abs(p.data.sum(axis=-1) - 1.0) > SIMPLEX_TOL) or np.any(p.data < 0):
        raise DimensionError("cross_entropy: predictions are not on the simplex")
    picked = np.take_along_axis(p.data, y[..., None], axis=-1)[..., 0]
    out = -np.log(picked + LOG_EPS)

    def backward(g):
        gp = np.zeros_like(p.data)
        np.put_along_axis(gp, y[..., None], (-g / (picked + LOG_EPS))[..., None], axis=-1)
        return (gp,)

    return _node(out, (p,), backward)
