"""Reverse-mode differentiation over numpy arrays, sized for this model.

Tensors wrap float32 arrays during training or float64 arrays when a graph
is built for gradient verification; an op's output dtype follows its
inputs. Each op records a closure that scatters the output gradient back
to the inputs with requires_grad set. A graph is single-owner: build it,
call backward once, read leaf grads.
"""

from dataclasses import dataclass, field

import numpy as np


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backprop")

    def __init__(self, values, requires_grad=False, dtype=None):
        if dtype is None:
            dtype = values.dtype if isinstance(values, np.ndarray) and \
                values.dtype in (np.float32, np.float64) else np.float32
        self.values = np.asarray(values, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backprop = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, dtype={self.values.dtype.name}, " \
               f"requires_grad={self.requires_grad})"


def tensor(values, requires_grad=False, dtype=np.float32):
    return Tensor(values, requires_grad=requires_grad, dtype=dtype)


def _result(values, parents, backprop):
    out = Tensor(values, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backprop = backprop
    return out


def _accumulate(t, grad, own=False):
    """Add `grad` into t.grad.

    own=True promises the array is freshly allocated by the caller (not a
    view of the upstream gradient), letting the first accumulation adopt
    it without a copy.
    """
    if not t.requires_grad:
        return
    if t.grad is None:
        if own and grad.dtype == t.values.dtype:
            t.grad = grad
        else:
            t.grad = np.array(grad, dtype=t.values.dtype, copy=True)
    else:
        t.grad += grad


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_same_shape(op, x, y):
    if x.values.shape != y.values.shape:
        try:
            np.broadcast_shapes(x.values.shape, y.values.shape)
        except ValueError:
            raise ValueError(
                f"{op}: incompatible shapes {x.values.shape} and {y.values.shape}")


def add(x, y):
    _check_same_shape("add", x, y)
    out_values = x.values + y.values

    def backprop(grad):
        _accumulate(x, _unbroadcast(grad, x.values.shape))
        _accumulate(y, _unbroadcast(grad, y.values.shape))

    return _result(out_values, (x, y), backprop)


def sub(x, y):
    _check_same_shape("sub", x, y)
    out_values = x.values - y.values

    def backprop(grad):
        _accumulate(x, _unbroadcast(grad, x.values.shape))
        _accumulate(y, -_unbroadcast(grad, y.values.shape))

    return _result(out_values, (x, y), backprop)


def mul(x, y):
    _check_same_shape("mul", x, y)
    out_values = x.values * y.values

    def backprop(grad):
        _accumulate(x, _unbroadcast(grad * y.values, x.values.shape), own=True)
        _accumulate(y, _unbroadcast(grad * x.values, y.values.shape), own=True)

    return _result(out_values, (x, y), backprop)


# Elementwise multiply with numpy broadcasting; alias kept for call sites
# that rely on the broadcast behavior rather than same-shape multiply.
broadcast_mul = mul


def relu(x):
    mask = x.values > 0

    def backprop(grad):
        _accumulate(x, grad * mask, own=True)

    return _result(x.values * mask, (x,), backprop)


def cos(x):
    def backprop(grad):
        _accumulate(x, -grad * np.sin(x.values), own=True)

    return _result(np.cos(x.values), (x,), backprop)


def sin(x):
    def backprop(grad):
        _accumulate(x, grad * np.cos(x.values), own=True)

    return _result(np.sin(x.values), (x,), backprop)


def scale(x, k):
    """Multiply by a python scalar (no graph node for the constant)."""
    k = x.values.dtype.type(k)

    def backprop(grad):
        _accumulate(x, grad * k, own=True)

    return _result(x.values * k, (x,), backprop)


def reshape(x, shape):
    old = x.values.shape

    def backprop(grad):
        _accumulate(x, grad.reshape(old))

    return _result(x.values.reshape(shape), (x,), backprop)


def transpose(x, axes):
    inverse = np.argsort(axes)

    def backprop(grad):
        _accumulate(x, grad.transpose(inverse))

    return _result(x.values.transpose(axes), (x,), backprop)


def narrow(x, axis, start, length):
    """Contiguous slice along one axis."""
    index = [slice(None)] * x.values.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backprop(grad):
        if x.requires_grad:
            full = np.zeros_like(x.values)
            full[index] = grad
            _accumulate(x, full, own=True)

    return _result(x.values[index].copy(), (x,), backprop)


def concat(xs, axis):
    xs = list(xs)
    sizes = [t.values.shape[axis] for t in xs]
    splits = np.cumsum(sizes)[:-1]

    def backprop(grad):
        for t, piece in zip(xs, np.split(grad, splits, axis=axis)):
            _accumulate(t, piece)

    return _result(np.concatenate([t.values for t in xs], axis=axis), xs, backprop)


def linear(x, w, b):
    """Affine map on the last axis: y = x @ w.T + b, w is (out, in)."""
    if x.values.shape[-1] != w.values.shape[1]:
        raise ValueError(
            f"linear: input width {x.values.shape} does not match weight {w.values.shape}")
    lead = x.values.shape[:-1]
    x2 = x.values.reshape(-1, x.values.shape[-1])
    out_values = (x2 @ w.values.T + b.values).reshape(*lead, w.values.shape[0])

    def backprop(grad):
        g2 = grad.reshape(-1, w.values.shape[0])
        _accumulate(x, (g2 @ w.values).reshape(x.values.shape), own=True)
        _accumulate(w, g2.T @ x2, own=True)
        _accumulate(b, g2.sum(axis=0), own=True)

    return _result(out_values, (x, w, b), backprop)


def conv3x3(x, w, b):
    """3x3 convolution, zero same-padding, stride 1.

    x is (n, c_in, h, w); weights are (c_out, c_in, 3, 3); bias (c_out,).
    On 1x1 spatial inputs the padding ring is all zeros, so only the center
    taps participate and the op collapses to a channel matmul.
    """
    if x.values.ndim != 4 or w.values.shape[1:] != (x.values.shape[1], 3, 3):
        raise ValueError(
            f"conv3x3: input {x.values.shape} incompatible with weight {w.values.shape}")
    n, c, h, wd = x.values.shape
    co = w.values.shape[0]

    if h == 1 and wd == 1:
        x2 = x.values.reshape(n, c)
        wc = w.values[:, :, 1, 1]
        out_values = (x2 @ wc.T + b.values).reshape(n, co, 1, 1)

        def backprop(grad):
            g2 = grad.reshape(n, co)
            if b.requires_grad:
                _accumulate(b, g2.sum(axis=0), own=True)
            if w.requires_grad:
                gw = np.zeros_like(w.values)
                gw[:, :, 1, 1] = g2.T @ x2
                _accumulate(w, gw, own=True)
            if x.requires_grad:
                _accumulate(x, (g2 @ wc).reshape(x.values.shape), own=True)

        return _result(out_values, (x, w, b), backprop)

    xp = np.pad(x.values, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out_values = np.tile(b.values.reshape(1, co, 1, 1), (n, 1, h, wd)).astype(x.values.dtype)
    for di in range(3):
        for dj in range(3):
            out_values += np.einsum(
                "nchw,oc->nohw", xp[:, :, di:di + h, dj:dj + wd], w.values[:, :, di, dj],
                optimize=True)

    def backprop(grad):
        if b.requires_grad:
            _accumulate(b, grad.sum(axis=(0, 2, 3)), own=True)
        if w.requires_grad:
            gw = np.empty_like(w.values)
            for di in range(3):
                for dj in range(3):
                    gw[:, :, di, dj] = np.einsum(
                        "nohw,nchw->oc", grad, xp[:, :, di:di + h, dj:dj + wd],
                        optimize=True)
            _accumulate(w, gw, own=True)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for di in range(3):
                for dj in range(3):
                    gxp[:, :, di:di + h, dj:dj + wd] += np.einsum(
                        "nohw,oc->nchw", grad, w.values[:, :, di, dj], optimize=True)
            _accumulate(x, np.ascontiguousarray(gxp[:, :, 1:h + 1, 1:wd + 1]), own=True)

    return _result(out_values, (x, w, b), backprop)


def mean(x):
    n = x.values.size

    def backprop(grad):
        _accumulate(x, np.full_like(x.values, grad / n), own=True)

    return _result(np.asarray(x.values.mean(), dtype=x.values.dtype), (x,), backprop)


def sum_all(x):
    def backprop(grad):
        _accumulate(x, np.full_like(x.values, grad), own=True)

    return _result(np.asarray(x.values.sum(), dtype=x.values.dtype), (x,), backprop)


def l1_loss(pred, target):
    """Mean absolute difference; the subgradient at zero difference is 0."""
    if pred.values.shape != target.values.shape:
        raise ValueError(
            f"l1_loss: shape mismatch {pred.values.shape} vs {target.values.shape}")
    diff = pred.values - target.values
    sign = np.sign(diff)
    n = diff.size

    def backprop(grad):
        _accumulate(pred, grad * sign / n, own=True)
        _accumulate(target, -grad * sign / n, own=True)

    return _result(np.asarray(np.abs(diff).mean(), dtype=pred.values.dtype),
                   (pred, target), backprop)


def backward(loss):
    """Backpropagate from a scalar loss; leaf grads accumulate additively."""
    if loss.values.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.values.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.values)
    for node in reversed(topo):
        if node._backprop is not None and node.grad is not None:
            node._backprop(node.grad)


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def ensure(self, params):
        if not self.m:
            self.m = [np.zeros_like(p.values) for p in params]
            self.v = [np.zeros_like(p.values) for p in params]
        for slot, p in zip(self.m, params):
            if slot.shape != p.values.shape:
                raise ValueError("optimizer state does not match parameter shapes")


def adam_step(params, grads, state):
    """One bias-corrected Adam update; parameter values are updated in place."""
    state.ensure(params)
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.values -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
