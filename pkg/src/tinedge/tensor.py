"""Dense tensors with reverse-mode automatic differentiation.

The operator set is exactly what the TIN detectors need: 2-D convolution
(with dilation), 2x2 max pooling, align-corners bilinear resizing, sigmoid,
elementwise add, channel concatenation, reflect padding, cropping and a
global sum.  Everything is double precision so finite-difference checks
have headroom.

Each op that touches a gradient-requiring input records itself on the
output tensor (op name, parent tensors, backward closure); ``backward``
walks those records once each, in reverse topological order, accumulating
into ``.grad``.  Gradients accumulate across calls; the caller zeroes them
between optimizer steps.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """N-dimensional double-precision array with an optional gradient.

    4-D tensors use (batch, channels, height, width) layout.
    """

    __slots__ = ("data", "grad", "requires_grad", "_op", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._op = None
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)   # private copy
        else:
            self.grad += g

    def backward(self):
        backward(self)


def _make_node(data, op: str, parents, backward_fn) -> Tensor:
    """Wrap an op result; records the tape entry only if a parent needs grad."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._op = op
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    else:
        out._op = op
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every reachable gradient-requiring tensor.

    ``loss`` must be scalar.  Each recorded op is visited exactly once, in
    reverse topological order.  Leaf gradients accumulate across calls
    (the caller zeroes them between optimizer steps); op-output gradients
    are recomputed fresh on every call.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar, got shape {loss.data.shape}")
    # Iterative post-order topological sort (graphs can be deep).
    order = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))
    for node in order:
        if node._backward_fn is not None:
            node.grad = None   # stale op-output gradients must not leak in
    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


def _check_finite(t: Tensor, what: str) -> None:
    if not np.all(np.isfinite(t.data)):
        raise ValueError(f"{what} contains non-finite values")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _im2col(xp, k, stride, dilation, out_h, out_w):
    """Gather dilated k*k taps: (N, Cin, H+2p, W+2p) -> (N, Cin*k*k, out_h*out_w)."""
    n, c = xp.shape[:2]
    if k == 1 and stride == 1:
        return xp.reshape(n, c, out_h * out_w)
    cols = np.empty((n, c, k, k, out_h, out_w), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[
                :, :,
                i * dilation: i * dilation + stride * (out_h - 1) + 1: stride,
                j * dilation: j * dilation + stride * (out_w - 1) + 1: stride,
            ]
    return cols.reshape(n, c * k * k, out_h * out_w)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, dilation: int = 1, padding: int | None = None) -> Tensor:
    """2-D convolution with zero-fill padding.

    ``padding=None`` selects "same" padding, dilation*(k-1)//2, so the
    spatial size is preserved at stride 1.  Out-of-bounds taps read zero.
    """
    if x.data.ndim != 4:
        raise ValueError(f"conv2d input must be 4-D, got shape {x.data.shape}")
    if weight.data.ndim != 4 or weight.data.shape[2] != weight.data.shape[3]:
        raise ValueError(f"conv2d weight must be (Cout, Cin, k, k), got {weight.data.shape}")
    n, cin, h, w = x.data.shape
    cout, cin_w, k, _ = weight.data.shape
    if cin != cin_w:
        raise ValueError(f"channel mismatch: input has {cin}, weight expects {cin_w}")
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    if bias is not None and bias.data.shape != (cout,):
        raise ValueError(f"bias must have shape ({cout},), got {bias.data.shape}")
    if padding is None:
        padding = dilation * (k - 1) // 2
    span = dilation * (k - 1) + 1
    out_h = (h + 2 * padding - span) // stride + 1
    out_w = (w + 2 * padding - span) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ValueError("conv2d output would be empty")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _im2col(xp, k, stride, dilation, out_h, out_w)
    w2 = weight.data.reshape(cout, cin * k * k)
    out = np.matmul(w2, cols).reshape(n, cout, out_h, out_w)
    if bias is not None:
        out += bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)
    if not any(p.requires_grad for p in parents):
        cols = None   # nothing to backpropagate; free the gather buffer early

    def bwd(go):
        go2 = go.reshape(n, cout, out_h * out_w)
        if weight.requires_grad:
            gw = np.matmul(go2, cols.transpose(0, 2, 1)).sum(axis=0)
            weight.accumulate_grad(gw.reshape(weight.data.shape))
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(go.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gcols = np.matmul(w2.T, go2).reshape(n, cin, k, k, out_h, out_w)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :,
                        i * dilation: i * dilation + stride * (out_h - 1) + 1: stride,
                        j * dilation: j * dilation + stride * (out_w - 1) + 1: stride,
                        ] += gcols[:, :, i, j]
            if padding:
                gx = gxp[:, :, padding:padding + h, padding:padding + w]
            else:
                gx = gxp
            x.accumulate_grad(gx)

    return _make_node(out, "conv2d", parents, bwd)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def max_pool_2x2(x: Tensor) -> Tensor:
    """Max over 2x2 windows with stride 2; odd trailing row/col windows truncate.

    Backward routes the gradient to the window argmax, first element in
    row-major order on ties.
    """
    if x.data.ndim != 4:
        raise ValueError(f"max_pool_2x2 input must be 4-D, got shape {x.data.shape}")
    n, c, h, w = x.data.shape
    if h < 2 or w < 2:
        raise ValueError(f"max_pool_2x2 needs H,W >= 2, got {h}x{w}")
    out_h, out_w = (h + 1) // 2, (w + 1) // 2
    xpad = np.full((n, c, 2 * out_h, 2 * out_w), -np.inf, dtype=x.data.dtype)
    xpad[:, :, :h, :w] = x.data
    win = xpad.reshape(n, c, out_h, 2, out_w, 2)
    # row-major window order: (0,0), (0,1), (1,0), (1,1)
    cand = np.stack([win[:, :, :, 0, :, 0], win[:, :, :, 0, :, 1],
                     win[:, :, :, 1, :, 0], win[:, :, :, 1, :, 1]])
    which = np.argmax(cand, axis=0)
    out = np.max(cand, axis=0)

    def bwd(go):
        if not x.requires_grad:
            return
        gpad = np.zeros((n, c, 2 * out_h, 2 * out_w))
        gwin = gpad.reshape(n, c, out_h, 2, out_w, 2)
        for t, (dy, dx) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            gwin[:, :, :, dy, :, dx] += go * (which == t)
        x.accumulate_grad(gpad[:, :, :h, :w])

    return _make_node(out, "max_pool_2x2", (x,), bwd)


# ---------------------------------------------------------------------------
# bilinear resize
# ---------------------------------------------------------------------------

def _resize_axes(in_size, out_size):
    if out_size > 1:
        src = np.arange(out_size, dtype=np.float64) * (in_size - 1) / (out_size - 1)
    else:
        src = np.zeros(1)
    lo = np.floor(src).astype(np.int64)
    lo = np.clip(lo, 0, in_size - 1)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Align-corners bilinear resampling; gradient scatters with the same weights."""
    if x.data.ndim != 4:
        raise ValueError(f"resize_bilinear input must be 4-D, got shape {x.data.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError("resize_bilinear output size must be >= 1")
    n, c, h, w = x.data.shape
    y0, y1, fy = _resize_axes(h, out_h)
    x0, x1, fx = _resize_axes(w, out_w)
    wy0, wy1 = (1.0 - fy)[:, None], fy[:, None]
    wx0, wx1 = (1.0 - fx)[None, :], fx[None, :]
    corners = ((y0, x0, wy0 * wx0), (y0, x1, wy0 * wx1),
               (y1, x0, wy1 * wx0), (y1, x1, wy1 * wx1))
    out = np.zeros((n, c, out_h, out_w))
    for ys, xs, wt in corners:
        out += wt * x.data[:, :, ys[:, None], xs[None, :]]

    def bwd(go):
        if not x.requires_grad:
            return
        gx = np.zeros(n * c * h * w)
        base = (np.arange(n * c) * (h * w))[:, None]
        go2 = go.reshape(n * c, out_h * out_w)
        for ys, xs, wt in corners:
            flat = (ys[:, None] * w + xs[None, :]).ravel()
            gx += np.bincount((base + flat[None, :]).ravel(),
                              weights=(go2 * wt.ravel()[None, :]).ravel(),
                              minlength=n * c * h * w)
        x.accumulate_grad(gx.reshape(n, c, h, w))

    return _make_node(out, "resize_bilinear", (x,), bwd)


# ---------------------------------------------------------------------------
# pointwise and structural ops
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    """Rectifier; the subgradient at 0 is taken as 0."""
    out = np.maximum(x.data, 0.0)

    def bwd(go):
        if x.requires_grad:
            x.accumulate_grad(go * (x.data > 0.0))

    return _make_node(out, "relu", (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic function; gradient is out*(1-out)."""
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)

    def bwd(go):
        if x.requires_grad:
            x.accumulate_grad(go * out * (1.0 - out))

    return _make_node(out, "sigmoid", (x,), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data

    def bwd(go):
        if a.requires_grad:
            a.accumulate_grad(go)
        if b.requires_grad:
            b.accumulate_grad(go)

    return _make_node(out, "add", (a, b), bwd)


def concat_channels(tensors) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat_channels needs at least one tensor")
    ref = tensors[0].data.shape
    for t in tensors[1:]:
        s = t.data.shape
        if len(s) != 4 or s[0] != ref[0] or s[2:] != ref[2:]:
            raise ValueError(f"concat_channels shape mismatch: {ref} vs {s}")
    out = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([t.data.shape[1] for t in tensors])[:-1]

    def bwd(go):
        for t, g in zip(tensors, np.split(go, splits, axis=1)):
            if t.requires_grad:
                t.accumulate_grad(g)

    return _make_node(out, "concat_channels", tensors, bwd)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def bwd(go):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(go, x.data.shape).astype(np.float64))

    return _make_node(out, "sum_all", (x,), bwd)


def pad_reflect(x: Tensor, pad_bottom: int, pad_right: int) -> Tensor:
    """Reflect-pad the bottom/right spatial borders (no edge duplication)."""
    if x.data.ndim != 4:
        raise ValueError("pad_reflect input must be 4-D")
    n, c, h, w = x.data.shape
    if pad_bottom >= h or pad_right >= w:
        raise ValueError("reflect padding must be smaller than the image")
    out = np.pad(x.data, ((0, 0), (0, 0), (0, pad_bottom), (0, pad_right)), mode="reflect")

    def bwd(go):
        if not x.requires_grad:
            return
        g = go.copy()
        for i in range(1, pad_bottom + 1):
            g[:, :, h - 1 - i, :] += g[:, :, h - 1 + i, :]
        g = g[:, :, :h, :]
        for j in range(1, pad_right + 1):
            g[:, :, :, w - 1 - j] += g[:, :, :, w - 1 + j]
        x.accumulate_grad(g[:, :, :, :w])

    return _make_node(out, "pad_reflect", (x,), bwd)


def crop_topleft(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Keep the top-left out_h x out_w spatial region."""
    if x.data.ndim != 4:
        raise ValueError("crop_topleft input must be 4-D")
    n, c, h, w = x.data.shape
    if out_h > h or out_w > w:
        raise ValueError(f"crop {out_h}x{out_w} exceeds input {h}x{w}")
    out = x.data[:, :, :out_h, :out_w].copy()

    def bwd(go):
        if not x.requires_grad:
            return
        g = np.zeros_like(x.data)
        g[:, :, :out_h, :out_w] = go
        x.accumulate_grad(g)

    return _make_node(out, "crop_topleft", (x,), bwd)
