"""Minimal dense-tensor reverse-mode autodiff engine.

Storage is float32; reductions and normalization statistics accumulate in
float64 before casting back. Shapes are always explicit: the only implicit
broadcasting anywhere is the trailing-weight case of matmul. Everything else
that needs broadcasting goes through broadcast_to().

The graph is implicit in parent links and is kept alive as long as the output
tensors are; backward() may be called repeatedly on the same graph and
accumulates into .grad each time (use zero_grads() between optimization steps).
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


class ShapeMismatch(ValueError):
    pass


class NonScalarLoss(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle the NaN/Inf sentinel that runs after every op forward."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def _finite_check(arr: np.ndarray) -> None:
    if _DEBUG_CHECKS and not np.all(np.isfinite(arr)):
        raise NonFiniteValue("non-finite value produced in forward pass")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar (explicit same-shape semantics, see the free functions)
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def backward(self) -> None:
        backward(self)


def _make(data, parents, backward_fn):
    """Build an op output; records the graph only if a parent needs grad."""
    _finite_check(data)
    req = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=req)
    if req:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss, accumulating into .grad.

    Pass-local gradients are kept separate and added into .grad at the end,
    so repeated calls accumulate exactly (two calls double every gradient).
    """
    if loss.size != 1:
        raise NonScalarLoss(f"backward needs a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    local: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = local.get(id(node))
        if g is None:
            continue
        if node._backward is not None:
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                acc = local.get(id(p))
                local[id(p)] = pg if acc is None else acc + pg

    for node in topo:
        g = local.get(id(node))
        if g is None:
            continue
        # pass-local arrays are never mutated in place afterwards, so they
        # can be adopted as .grad without copying
        g = g.astype(np.float32, copy=False)
        node.grad = g if node.grad is None else node.grad + g


def zero_grads(tensors) -> None:
    for t in tensors:
        t.zero_grad()


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_shape(a: Tensor, b: Tensor, opname: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{opname}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "mul")
    return _make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "div")
    inv = 1.0 / b.data
    out = a.data * inv
    return _make(out, (a, b), lambda g: (g * inv, -g * out * inv))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _make(a.data + np.float32(c), (a,), lambda g: (g,))


def mul_scalar(a: Tensor, c: float) -> Tensor:
    c = np.float32(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (g * (2.0 * a.data),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def silu(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = a.data * s
    return _make(out, (a,), lambda g: (g * (s * (1.0 + a.data * (1.0 - s))),))


def gelu(a: Tensor) -> Tensor:
    # tanh approximation; gradient is of the approximation itself
    c = np.float32(np.sqrt(2.0 / np.pi))
    x = a.data
    inner = c * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def bw(g):
        dinner = c * (1.0 + 3 * 0.044715 * x**2)
        dt = (1.0 - t * t) * dinner
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return _make(out, (a,), bw)


def stop_grad(a: Tensor) -> Tensor:
    """Forward identity (bitwise), zero gradient through this edge."""
    return Tensor(a.data.copy(), requires_grad=False)


# ------------------------------------------------------------- shape plumbing


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeMismatch(f"reshape: cannot view {a.shape} as {shape}")
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(
        np.ascontiguousarray(a.data.transpose(axes)),
        (a,),
        lambda g: (g.transpose(inv),),
    )


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeMismatch(f"narrow: [{start}:{start + length}] out of range on axis {axis}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(np.ascontiguousarray(a.data[idx]), (a,), bw)


def gather_rows(a: Tensor, indices, axis: int = 0) -> Tensor:
    indices = np.asarray(indices, dtype=np.int64)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (slice(None),) * axis + (indices,), g)
        return (full,)

    return _make(np.take(a.data, indices, axis=axis), (a,), bw)


def broadcast_to(a: Tensor, shape) -> Tensor:
    """Explicit broadcast: every expanded axis must be size 1 (or new, left)."""
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError as exc:
        raise ShapeMismatch(f"broadcast_to: {a.shape} -> {shape}") from exc
    n_new = len(shape) - a.ndim
    reduce_axes = tuple(range(n_new)) + tuple(
        i + n_new for i, d in enumerate(a.shape) if d == 1 and shape[i + n_new] != 1
    )
    old = a.shape

    def bw(g):
        pg = g.sum(axis=reduce_axes, keepdims=False, dtype=np.float64) if reduce_axes else g
        return (np.asarray(pg, dtype=np.float32).reshape(old),)

    return _make(np.ascontiguousarray(out), (a,), bw)


# ------------------------------------------------------------------- algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a @ b. Either b is a 2-D weight (applied to a's last axis) or both
    operands have identical leading batch dims."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul needs ndim >= 2 operands")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: inner dims {a.shape} @ {b.shape}")
    if b.ndim == 2:
        def bw(g):
            ga = g @ b.data.T
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return (ga, gb)
    elif a.shape[:-2] == b.shape[:-2]:
        def bw(g):
            return (g @ b.data.swapaxes(-1, -2), a.data.swapaxes(-1, -2) @ g)
    else:
        raise ShapeMismatch(f"matmul: leading dims {a.shape} vs {b.shape}")
    return _make(a.data @ b.data, (a, b), bw)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    x = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(x)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), bw)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis; stats in float64."""
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch(f"layer_norm: gain/bias must be ({d},)")
    x = a.data.astype(np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).astype(np.float32)
    out = xhat * gain.data + bias.data

    inv32 = inv.astype(np.float32)

    def bw(g):
        gg = (g * xhat).reshape(-1, d).sum(axis=0, dtype=np.float64)
        gb = g.reshape(-1, d).sum(axis=0, dtype=np.float64)
        gx = g * gain.data
        m1 = gx.mean(axis=-1, keepdims=True)
        m2 = (gx * xhat).mean(axis=-1, keepdims=True)
        ga = inv32 * (gx - m1 - xhat * m2)
        return (
            ga,
            gg.astype(np.float32),
            gb.astype(np.float32),
        )

    return _make(out, (a, gain, bias), bw)


# ----------------------------------------------------------------- reductions


def tsum(a: Tensor) -> Tensor:
    out = np.array([a.data.sum(dtype=np.float64)], dtype=np.float32)
    return _make(out, (a,), lambda g: (np.full_like(a.data, g.reshape(-1)[0]),))


def tmean(a: Tensor) -> Tensor:
    n = a.size
    out = np.array([a.data.sum(dtype=np.float64) / n], dtype=np.float32)
    return _make(out, (a,), lambda g: (np.full_like(a.data, g.reshape(-1)[0] / n),))


def sum_axis(a: Tensor, axis: int, keepdims: bool = True) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(np.float32)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), bw)


def avg_pool2d(a: Tensor, window: int) -> Tensor:
    """Non-overlapping mean pooling over the two leading spatial axes of
    an H x W x C (or H x W) tensor; H and W must divide by window."""
    h, w = a.shape[0], a.shape[1]
    if h % window or w % window:
        raise ShapeMismatch(f"avg_pool2d: {h}x{w} not divisible by {window}")
    rest = a.shape[2:]
    view = a.data.reshape(h // window, window, w // window, window, *rest)
    out = view.mean(axis=(1, 3), dtype=np.float64).astype(np.float32)
    scale = 1.0 / (window * window)

    def bw(g):
        g = np.expand_dims(np.expand_dims(g, 1), 3) * scale
        return (np.broadcast_to(g, view.shape).reshape(a.shape).copy(),)

    return _make(out, (a,), bw)


def conv1d_fixed(a: Tensor, kernel: np.ndarray, axis: int) -> Tensor:
    """Valid 1-D convolution with a fixed (non-learnable) kernel along `axis`.
    Output length along the axis shrinks by len(kernel) - 1."""
    kernel = np.asarray(kernel, dtype=np.float32)
    k = kernel.shape[0]
    if a.shape[axis] < k:
        raise ShapeMismatch(f"conv1d_fixed: axis {axis} shorter than kernel ({k})")
    out = _valid_correlate(a.data, kernel, axis)

    def bw(g):
        pad = [(0, 0)] * a.ndim
        pad[axis] = (k - 1, k - 1)
        return (_valid_correlate(np.pad(g, pad), kernel[::-1], axis),)

    return _make(out, (a,), bw)


def _valid_correlate(x: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Valid-region 1-D correlation: out[i] = sum_j x[i + j] * kernel[j]."""
    k = kernel.shape[0]
    full = ndimage.correlate1d(x, kernel, axis=axis, mode="constant", cval=0.0)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(k // 2, x.shape[axis] - (k - 1 - k // 2))
    return full[tuple(idx)]


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on raw logits against fixed 0/1 targets."""
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeMismatch(f"bce_with_logits: {logits.shape} vs {y.shape}")
    x = logits.data.astype(np.float64)
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    out = np.array([per.mean()], dtype=np.float32)
    n = logits.size

    def bw(g):
        p = 1.0 / (1.0 + np.exp(-x))
        return ((g.reshape(-1)[0] / n * (p - y)).astype(np.float32),)

    return _make(out, (logits,), bw)
