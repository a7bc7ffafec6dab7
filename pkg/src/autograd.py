"""
Reverse-mode automatic differentiation over numpy arrays.

Only the op set the policy networks need is implemented: affine map, 2D
convolution, pointwise nonlinearities, softmax, layer normalization,
max/mean/sum reductions, concatenation, reshape/transpose, and scaled
dot-product attention. Every op checks operand shapes and refuses to
produce NaN/Inf.

Gradients accumulate additively into leaf tensors that have
requires_grad=True; call zero_grad() (or Optimizer.zero_grad) to reset.
"""

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GraphError, NumericalError, ShapeError

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Run forward passes without recording a graph (inference)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """Dense array with an optional gradient buffer."""

    def __init__(self, data, requires_grad: bool = False, dtype=DEFAULT_DTYPE):
        self.data = np.array(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._op = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple, backward, op: str) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NumericalError(f"{op}: forward pass produced non-finite values")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        track = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = parents if track else ()
        out._backward = backward if track else None
        out._op = op
        return out

    # -- basic properties ---------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{op})"

    # -- operators ----------------------------------------------------------

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

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported; multiply by a constant")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    # -- backward -----------------------------------------------------------

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype)
        else:
            self.grad += grad

    def _topological_order(self) -> list:
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, finished = stack.pop()
            if finished:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        order.reverse()
        return order

    def backward(self, grad=None):
        """Propagate `grad` (default: 1 for scalar outputs) to every leaf."""
        if self._backward is None:
            raise GraphError(
                "backward() called on a tensor with no recorded forward pass "
                "(leaf tensor, or built without any requires_grad input)"
            )
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward: implicit gradient needs a scalar output, got {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeError(f"backward: gradient shape {grad.shape} != output shape {self.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericalError("backward: output gradient is non-finite")

        pending = {id(self): grad}
        for node in self._topological_order():
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node._accumulate(g)
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if not np.all(np.isfinite(parent_grad)):
                    raise NumericalError(f"{node._op}: backward pass produced non-finite gradient")
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _lift(value, like: Tensor) -> Tensor:
    """Wrap constants; python scalars take the dtype of the tensor they meet."""
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value)
    if arr.dtype.kind != "f" or arr.ndim == 0:
        arr = arr.astype(like.data.dtype)
    return Tensor(arr, dtype=arr.dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, b)
    b = _lift(b, a)
    _check_broadcast("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, b)
    b = _lift(b, a)
    _check_broadcast("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, b)
    b = _lift(b, a)
    _check_broadcast("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "matmul")


# ---------------------------------------------------------------------------
# Layers as ops
# ---------------------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor = None) -> Tensor:
    """Affine map over the last axis: x @ W + b, with W of shape (in, out)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        gx = g @ weight.data.T
        gw = x2.T @ g2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward, "linear")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2D convolution on NHWC input; weight layout (k, k, C_in, C_out)."""
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[0] != weight.shape[1] or x.shape[3] != weight.shape[2]:
        raise ShapeError(f"conv2d: input {x.shape} does not match weight {weight.shape}")
    k, _, cin, cout = weight.shape
    n, h, w, _ = x.shape
    if h + 2 * padding < k or w + 2 * padding < k:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {x.shape}")
    s, p = stride, padding
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0)))
    windows = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
    ho, wo = windows.shape[1], windows.shape[2]
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * cin)
    wmat = weight.data.reshape(k * k * cin, cout)
    out = cols @ wmat
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, ho, wo, cout)

    def backward(g):
        g2 = g.reshape(-1, cout)
        gw = (cols.T @ g2).reshape(weight.shape)
        dcols = (g2 @ wmat.T).reshape(n, ho, wo, k, k, cin)
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :] += dcols[:, :, :, i, j, :]
        gx = dxp[:, p:p + h, p:p + w, :]
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward, "conv2d")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: input {x.shape} does not match gamma {gamma.shape} / beta {beta.shape}")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def backward(g):
        dxhat = g * gamma.data
        gx = inv_std / d * (
            d * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        ggamma = (g * xhat).reshape(-1, d).sum(axis=0)
        gbeta = g.reshape(-1, d).sum(axis=0)
        return gx, ggamma, gbeta

    return Tensor._from_op(xhat * gamma.data + beta.data, (x, gamma, beta), backward, "layer_norm")


# ---------------------------------------------------------------------------
# Pointwise nonlinearities
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return Tensor._from_op(x.data * mask, (x,), backward, "relu")


def mish(x: Tensor) -> Tensor:
    """x * tanh(softplus(x)); smooth, so finite differences see no kinks."""
    th = np.tanh(np.logaddexp(0.0, x.data))

    def backward(g):
        sig = 0.5 * (1.0 + np.tanh(0.5 * x.data))
        return (g * (th + x.data * (1.0 - th * th) * sig),)

    return Tensor._from_op(x.data * th, (x,), backward, "mish")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return Tensor._from_op(y, (x,), backward, "tanh")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = shifted / shifted.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(y, (x,), backward, "softmax")


# ---------------------------------------------------------------------------
# Reductions and structural ops
# ---------------------------------------------------------------------------

def _normalize_axis(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_reduce(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(np.asarray(out), (x,), backward, "sum")


def mean_reduce(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return Tensor._from_op(np.asarray(out), (x,), backward, "mean")


def max_reduce(x: Tensor, axis: int) -> Tensor:
    """Max over one axis; the gradient goes to the lowest-index argmax only."""
    axis = axis % x.ndim
    index = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, index, axis=axis).squeeze(axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, index, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return Tensor._from_op(out, (x,), backward, "max")


def concat(tensors: list, axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis):
            raise ShapeError(f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    out = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._from_op(out, tuple(tensors), backward, "concat")


def reshape(x: Tensor, shape: tuple) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor._from_op(out, (x,), backward, "reshape")


def transpose(x: Tensor, axes: tuple) -> Tensor:
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inverse = np.argsort([a % x.ndim for a in axes])

    def backward(g):
        return (g.transpose(inverse),)

    return Tensor._from_op(x.data.transpose(axes), (x,), backward, "transpose")


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, tuple(axes))


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor) -> tuple:
    """softmax(q k^T / sqrt(d)) v. Returns (output, attention weights)."""
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} are incompatible")
    scores = mul(matmul(q, swap_last(k)), 1.0 / np.sqrt(q.shape[-1]))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v), weights


def mse_loss(prediction: Tensor, target) -> Tensor:
    target = _lift(target, prediction)
    if prediction.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {prediction.shape} vs target {target.shape}")
    diff = sub(prediction, target)
    return mean_reduce(mul(diff, diff))


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def gradcheck(fn, leaves: list, eps: float = 1e-3, seed: int = 0) -> float:
    """Compare analytic gradients with central finite differences.

    `fn()` must rebuild the graph from `leaves` (float64 tensors with
    requires_grad=True) and return its output. The output is contracted with
    a fixed random probe so every output element contributes. Returns the
    worst norm-relative error over all leaves.
    """
    for leaf in leaves:
        if leaf.data.dtype != np.float64:
            raise ValueError("gradcheck expects float64 leaves")
        leaf.zero_grad()
    out = fn()
    probe = np.random.default_rng(seed).standard_normal(out.shape)
    out.backward(probe)

    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        numeric = np.zeros_like(leaf.data)
        with no_grad():
            for idx in np.ndindex(leaf.data.shape):
                original = leaf.data[idx]
                leaf.data[idx] = original + eps
                plus = float(np.sum(fn().data * probe))
                leaf.data[idx] = original - eps
                minus = float(np.sum(fn().data * probe))
                leaf.data[idx] = original
                numeric[idx] = (plus - minus) / (2 * eps)
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / scale))
    return worst
