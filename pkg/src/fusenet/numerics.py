"""Small reverse-mode differentiation engine over float64 numpy arrays.

Every primitive the segmentation network needs lives here with a hand-written
backward rule: elementwise arithmetic, matmul, reductions, convolutions,
normalisation layers, GELU, softmax and bilinear resizing.  ``backward``
walks the graph in reverse topological order; ``finite_diff_check`` compares
the result against central differences.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

# Ops whose backward rule is deliberately scaled (fault injection for gradcheck).
_CORRUPTED: set[str] = set()


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; names the offending axis."""


class NonDifferentiableError(RuntimeError):
    """Raised by ``finite_diff_check`` when the function jumps at a probe point."""

    def __init__(self, index, ops):
        self.index = index
        self.ops = tuple(ops)
        where = f" (hard ops on the path: {', '.join(self.ops)})" if self.ops else ""
        super().__init__(f"function is not differentiable at flat index {index}{where}")


class Tensor:
    """An immutable float64 array that remembers how it was produced."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into ``.grad`` of every node needing it."""
        if self.data.size != 1:
            _not_scalar(self)
        order = topological_order(self)
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            if node.op in _CORRUPTED:
                parent_grads = [None if pg is None else 1.5 * pg for pg in parent_grads]
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg


def _not_scalar(t: Tensor):
    raise ValueError(f"expected a scalar tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(op: str, data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data, op=op)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` that carry gradients, inputs first."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    return order


def backward(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` for each named parameter.

    Parameters the loss does not depend on get zero arrays.
    """
    if loss.data.size != 1:
        _not_scalar(loss)
    for p in params.values():
        p.grad = None
    if loss.requires_grad:
        loss.backward()
    return {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }


@contextlib.contextmanager
def corrupt_backward(*ops: str):
    """Scale the backward rule of the named ops by 1.5 while active."""
    _CORRUPTED.update(ops)
    try:
        yield
    finally:
        _CORRUPTED.difference_update(ops)


# ---------------------------------------------------------------- elementwise


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "add")
    return _node(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "sub")
    return _node(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")
    return _node(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "div")
    out = a.data / b.data
    return _node(
        "div",
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _node("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor, floor: float | None = None) -> Tensor:
    """Natural log; with ``floor`` the input is clamped from below first."""
    if floor is None:
        return _node("log", np.log(x.data), (x,), lambda g: (g / x.data,))
    live = x.data >= floor
    out = np.log(np.maximum(x.data, floor))
    return _node("log", out, (x,), lambda g: (np.where(live, g / np.where(live, x.data, 1.0), 0.0),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _node("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def tabs(x: Tensor) -> Tensor:
    return _node("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    v = x.data
    v2 = v * v
    inner = _GELU_C * v * (1.0 + 0.044715 * v2)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def _back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * v2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner),)

    return _node("gelu", out, (x,), _back)


# ------------------------------------------------------------ shape & reduce


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def _back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node("sum", out, (x,), _back)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None
    return _node("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    out = np.transpose(x.data, axes)
    inverse = None if axes is None else np.argsort(axes)
    return _node("transpose", out, (x,), lambda g: (np.transpose(g, inverse),))


def getitem(x: Tensor, index) -> Tensor:
    def _back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _node("getitem", x.data[index], (x,), _back)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        for i, (m, n) in enumerate(zip(tensors[0].shape, t.shape)):
            if i != ax and m != n:
                raise ShapeError(f"concat: axis {i} differs ({m} vs {n})")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    return _node(
        "concat",
        np.concatenate([t.data for t in tensors], axis=ax),
        tensors,
        lambda g: tuple(np.split(g, bounds, axis=ax)),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner axis mismatch, {a.shape[1]} vs {b.shape[0]}")
    return _node("matmul", a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


# ---------------------------------------------------------------- layers


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Row-wise affine map ``x @ weight + bias`` for ``x`` of shape (N, din)."""
    if x.ndim != 2:
        raise ShapeError(f"linear: input must be (N, din), got {x.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"linear: input axis 1 has {x.shape[1]} features, weight expects {weight.shape[0]}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear: bias axis 0 has {bias.shape}, expected ({weight.shape[1]},)")
    out = x.data @ weight.data
    parents = [x, weight]
    if bias is not None:
        out = out + bias.data
        parents.append(bias)

    def _back(g):
        grads = [g @ weight.data.T, x.data.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    return _node("linear", out, parents, _back)


_PAD_MODES = {"zeros": "constant", "edge": "edge"}


def _fold_padding(gp: np.ndarray, r: int, h: int, w: int, mode: str) -> np.ndarray:
    """Gradient w.r.t. the unpadded input given the gradient w.r.t. the padded one."""
    if mode == "edge" and r:
        gp = gp.copy()
        gp[r] += gp[:r].sum(axis=0)
        gp[r + h - 1] += gp[r + h :].sum(axis=0)
        gp[:, r] += gp[:, :r].sum(axis=1)
        gp[:, r + w - 1] += gp[:, r + w :].sum(axis=1)
    return gp[r : r + h, r : r + w]


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, padding: str = "zeros") -> Tensor:
    """'Same' cross-correlation of an (H, W, Cin) map.

    ``kernel`` has shape (k, k, Cin, Cout) with k odd.  ``padding`` is
    ``"zeros"`` or ``"edge"`` (border pixels replicated).
    """
    if padding not in _PAD_MODES:
        raise ValueError(f"conv2d: padding must be one of {sorted(_PAD_MODES)}, got {padding!r}")
    if x.ndim != 3:
        raise ShapeError(f"conv2d: input must be (H, W, C), got {x.shape}")
    k, k2, cin, cout = kernel.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d: kernel axes 0/1 must be equal and odd, got {k}x{k2}")
    if x.shape[2] != cin:
        raise ShapeError(f"conv2d: input channel axis 2 has {x.shape[2]}, kernel axis 2 expects {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias axis 0 has {bias.shape}, expected ({cout},)")
    h, w, _ = x.shape
    r = k // 2
    xp = np.pad(x.data, ((r, r), (r, r), (0, 0)), mode=_PAD_MODES[padding])
    out = np.zeros((h, w, cout))
    for dy in range(k):
        for dx in range(k):
            out += xp[dy : dy + h, dx : dx + w, :] @ kernel.data[dy, dx]
    parents = [x, kernel]
    if bias is not None:
        out += bias.data
        parents.append(bias)

    def _back(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kernel.data)
        g2 = g.reshape(-1, cout)
        for dy in range(k):
            for dx in range(k):
                gxp[dy : dy + h, dx : dx + w, :] += g @ kernel.data[dy, dx].T
                gk[dy, dx] = xp[dy : dy + h, dx : dx + w, :].reshape(-1, cin).T @ g2
        grads = [_fold_padding(gxp, r, h, w, padding), gk]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return _node("conv2d", out, parents, _back)


def depthwise_conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-channel 'same' convolution; ``kernel`` is (k, k, C) with k odd.

    With a 1x1 kernel this is ``out[h, w, c] = x[h, w, c] * k[c] + b[c]``.
    """
    if x.ndim != 3:
        raise ShapeError(f"depthwise_conv2d: input must be (H, W, C), got {x.shape}")
    k, k2, c = kernel.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"depthwise_conv2d: kernel axes 0/1 must be equal and odd, got {k}x{k2}")
    if x.shape[2] != c:
        raise ShapeError(f"depthwise_conv2d: input channel axis 2 has {x.shape[2]}, kernel expects {c}")
    if bias is not None and bias.shape != (c,):
        raise ShapeError(f"depthwise_conv2d: bias axis 0 has {bias.shape}, expected ({c},)")
    h, w, _ = x.shape
    r = k // 2
    xp = np.pad(x.data, ((r, r), (r, r), (0, 0)))
    out = np.zeros_like(x.data)
    for dy in range(k):
        for dx in range(k):
            out += xp[dy : dy + h, dx : dx + w, :] * kernel.data[dy, dx]
    parents = [x, kernel]
    if bias is not None:
        out += bias.data
        parents.append(bias)

    def _back(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kernel.data)
        for dy in range(k):
            for dx in range(k):
                gxp[dy : dy + h, dx : dx + w, :] += g * kernel.data[dy, dx]
                gk[dy, dx] = (xp[dy : dy + h, dx : dx + w, :] * g).sum(axis=(0, 1))
        grads = [gxp[r : r + h, r : r + w, :], gk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1)))
        return grads

    return _node("depthwise_conv2d", out, parents, _back)


def _normalize(op: str, x: Tensor, gamma: Tensor, beta: Tensor, axes: tuple[int, ...], eps: float) -> Tensor:
    # gamma/beta live on the last axis; statistics are taken over ``axes``.
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(f"{op}: affine parameters must have shape ({x.shape[-1]},)")
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    param_axes = tuple(range(x.ndim - 1))

    def _back(g):
        gxhat = g * gamma.data
        gx = inv * (
            gxhat
            - gxhat.mean(axis=axes, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=axes, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=param_axes), g.sum(axis=param_axes)

    return _node(op, xhat * gamma.data + beta.data, (x, gamma, beta), _back)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise each channel of an (H, W, C) map over its spatial positions.

    A single image is the whole batch, so the statistics come from H x W and
    no running averages exist.
    """
    if x.ndim != 3:
        raise ShapeError(f"batch_norm: input must be (H, W, C), got {x.shape}")
    if x.shape[0] * x.shape[1] < 2:
        raise ShapeError("batch_norm: needs at least two spatial positions")
    return _normalize("batch_norm", x, gamma, beta, (0, 1), eps)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise each row of an (N, d) matrix over its features."""
    if x.ndim != 2:
        raise ShapeError(f"layer_norm: input must be (N, d), got {x.shape}")
    if x.shape[1] < 2:
        raise ShapeError("layer_norm: feature axis 1 must have at least 2 entries")
    return _normalize("layer_norm", x, gamma, beta, (1,), eps)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _node("softmax", s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return _node("log_softmax", out, (x,), lambda g: (g - s * g.sum(axis=axis, keepdims=True),))


def l2_normalize(x: Tensor, guard: float = 1e-12) -> Tensor:
    """Divide each row of an (N, d) matrix by its L2 norm (plus ``guard``)."""
    norm = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    denom = norm + guard
    out = x.data / denom

    def _back(g):
        proj = (g * x.data).sum(axis=1, keepdims=True)
        safe = np.where(norm > 0, norm, 1.0)
        return (g / denom - x.data * proj / (denom * denom * safe),)

    return _node("l2_normalize", out, (x,), _back)


def _resize_coords(n_in: int, n_out: int):
    # align_corners=False sampling positions, clamped to the valid range.
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def _lerp_axis(v: np.ndarray, axis: int, n_out: int):
    i0, i1, wt = _resize_coords(v.shape[axis], n_out)
    shape = [1] * v.ndim
    shape[axis] = n_out
    wt = wt.reshape(shape)
    a = np.take(v, i0, axis=axis)
    b = np.take(v, i1, axis=axis)
    # a + w (b - a) keeps constant inputs exact.
    return a + wt * (b - a), (i0, i1, wt)


def _lerp_axis_back(g: np.ndarray, axis: int, n_in: int, cache) -> np.ndarray:
    i0, i1, wt = cache
    wt = wt.reshape(-1)
    weights = np.zeros((wt.size, n_in))
    rows = np.arange(wt.size)
    np.add.at(weights, (rows, i0), 1.0 - wt)
    np.add.at(weights, (rows, i1), wt)
    return np.moveaxis(np.tensordot(weights.T, np.moveaxis(g, axis, 0), axes=1), 0, axis)


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of an (H, W, C) map, align_corners=False with edge clamping."""
    if x.ndim != 3:
        raise ShapeError(f"resize_bilinear: input must be (H, W, C), got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize_bilinear: output size must be positive, got {out_h}x{out_w}")
    h, w, _ = x.shape
    rows, cache_h = _lerp_axis(x.data, 0, out_h)
    out, cache_w = _lerp_axis(rows, 1, out_w)

    def _back(g):
        g_rows = _lerp_axis_back(g, 1, w, cache_w)
        return (_lerp_axis_back(g_rows, 0, h, cache_h),)

    return _node("resize_bilinear", out, (x,), _back)


def resize_bilinear_array(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Plain-array version of :func:`resize_bilinear` for 2-D or 3-D inputs."""
    squeeze = x.ndim == 2
    v = np.asarray(x, dtype=np.float64)
    if squeeze:
        v = v[:, :, None]
    out = resize_bilinear(Tensor(v), out_h, out_w).data
    return out[:, :, 0] if squeeze else out


# --------------------------------------------------------------- checking


def _hard_ops(f_out: Tensor) -> list[str]:
    return sorted({n.op for n in topological_order(f_out) if n.op in _HARD_OPS})


# Ops that produce piecewise-constant outputs; gradients treat them as constants.
_HARD_OPS = {"argmax_select"}


def argmax_select(x: Tensor, axis: int = -1) -> Tensor:
    """Pick ``x`` at its argmax along ``axis``; the choice itself is not differentiated."""
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    onehot = np.zeros_like(x.data)
    np.put_along_axis(onehot, idx, 1.0, axis=axis)
    out = (x.data * onehot).sum(axis=axis)

    def _back(g):
        return (np.expand_dims(g, axis) * onehot,)

    return _node("argmax_select", out, (x,), _back)


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x,
    eps: float = 1e-5,
    indices: Iterable[int] | None = None,
    jump_tol: float = 1e-2,
    floor: float = 1e-6,
) -> float:
    """Largest relative error between the analytic and a central-difference gradient.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``; the floor
    keeps structurally zero gradients from being judged on rounding noise.  When the
    one-sided differences disagree by more than ``jump_tol`` (relative to the
    slope scale) the function is not smooth at the probe point and a
    :class:`NonDifferentiableError` names the offending coordinate.
    """
    base = np.array(np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64))
    xt = Tensor(base.copy(), requires_grad=True)
    out = f(xt)
    if out.data.size != 1:
        _not_scalar(out)
    out.backward()
    analytic = xt.grad if xt.grad is not None else np.zeros_like(base)
    hard = _hard_ops(out) if out.requires_grad else []
    f0 = float(out.data.reshape(-1)[0])

    def value(v):
        return float(f(Tensor(v)).data.reshape(-1)[0])

    flat = base.reshape(-1)
    worst = 0.0
    for i in range(flat.size) if indices is None else indices:
        probe = flat.copy()
        probe[i] += eps
        fp = value(probe.reshape(base.shape))
        probe[i] -= 2 * eps
        fm = value(probe.reshape(base.shape))
        numeric = (fp - fm) / (2 * eps)
        fwd, bwd = (fp - f0) / eps, (f0 - fm) / eps
        if abs(fwd - bwd) > jump_tol * max(1.0, abs(fwd), abs(bwd)):
            raise NonDifferentiableError(i, hard)
        a = analytic.reshape(-1)[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        worst = max(worst, err)
    return worst
