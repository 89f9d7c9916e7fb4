"""Minimal reverse-mode autodiff engine.

Provides exactly the layer primitives the re-id network needs: 2-d
convolution, transposed convolution, max pooling, tanh, fully-connected
layers, and a handful of elementwise/reduction ops. Values are numpy
arrays wrapped in :class:`Tensor`; executed primitives append a record to
a :class:`Tape`, and :func:`backward` replays the tape in reverse,
accumulating gradients (summing over repeated parameter uses, which is
what implements Siamese weight sharing).

Spatial tensors are laid out height x width x channels, optionally with a
leading batch axis. Convolution kernels are (kh, kw, c_in, c_out). There
is no broadcasting and no GPU path; forward evaluation is pure, so
identical inputs give bitwise-identical outputs within a process.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "grad_check",
    "conv2d",
    "deconv2d",
    "max_pool2d",
    "tanh",
    "linear",
    "add",
    "sub",
    "mul",
    "scale",
    "negate",
    "add_const",
    "sum_all",
    "relu",
    "maximum",
    "concat_channels",
    "reshape",
    "take_row",
]


class Tensor:
    """An n-d real array with an optional gradient slot.

    ``data`` is never mutated by an operation once written; ``grad`` is
    populated by :func:`backward` for tensors with ``requires_grad``.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed primitives for one forward pass.

    Replaying the records in reverse visits every recorded operation
    exactly once; records hold (output, inputs, backward_fn) where
    backward_fn maps the output gradient to per-input gradients.
    """

    def __init__(self):
        self.records = []

    def __len__(self):
        return len(self.records)


def _emit(tape, out_data, inputs, backward_fn):
    """Wrap an op result, recording it when gradients may be needed."""
    req = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=req)
    if req and tape is not None:
        tape.records.append((out, inputs, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor):
    """Populate grads of everything reachable from ``loss`` on ``tape``.

    Gradients accumulate by summation when a tensor feeds several ops
    (or both Siamese branches). Raises ValueError for a non-scalar loss.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for out, inputs, backward_fn in reversed(tape.records):
        if out.grad is None:
            continue  # this output never contributed to the loss
        grads = backward_fn(out.grad)
        for t, g in zip(inputs, grads):
            if g is None or not t.requires_grad:
                continue
            if t.grad is None:
                # take ownership of freshly built arrays; copy anything that
                # aliases the output gradient or another array
                if g is out.grad or g.base is not None:
                    t.grad = g.copy()
                else:
                    t.grad = g
            else:
                t.grad += g


# ---------------------------------------------------------------------------
# im2col / col2im helpers (shared by conv2d, deconv2d and their backwards)
# ---------------------------------------------------------------------------


def _gather_patches(xp, kh, kw, stride, out_h, out_w):
    """(n, hp, wp, c) -> (n, out_h, out_w, kh, kw, c) window gather."""
    n, _, _, c = xp.shape
    cols = np.empty((n, out_h, out_w, kh, kw, c), dtype=xp.dtype)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, :, ki, kj, :] = xp[
                :, ki : ki + stride * out_h : stride, kj : kj + stride * out_w : stride, :
            ]
    return cols


def _scatter_patches_add(target, cols, kh, kw, stride, out_h, out_w):
    """Adjoint of :func:`_gather_patches`: scatter-add windows into target."""
    for ki in range(kh):
        for kj in range(kw):
            target[
                :, ki : ki + stride * out_h : stride, kj : kj + stride * out_w : stride, :
            ] += cols[:, :, :, ki, kj, :]


def _as_batched(data):
    """View (h, w, c) as (1, h, w, c); pass 4-d through unchanged."""
    if data.ndim == 3:
        return data[None], True
    if data.ndim == 4:
        return data, False
    raise ValueError(f"expected a 3-d or 4-d spatial tensor, got shape {data.shape}")


# ---------------------------------------------------------------------------
# layer primitives
# ---------------------------------------------------------------------------


def conv2d(tape, x: Tensor, kernel: Tensor, bias, stride: int, padding: int) -> Tensor:
    """2-d correlation with symmetric zero padding.

    Output extents are floor((h + 2*padding - kh)/stride) + 1 and
    analogously for width. ``bias`` may be None.
    """
    xb, squeeze = _as_batched(x.data)
    n, h, w, c = xb.shape
    kh, kw, c_in, c_out = kernel.data.shape
    if c_in != c:
        raise ValueError(
            f"conv2d channel mismatch: input has {c} channels, kernel expects {c_in} "
            f"(input {x.data.shape}, kernel {kernel.data.shape})"
        )
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ValueError(
            f"conv2d kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1

    if padding:
        xp = np.pad(xb, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    else:
        xp = xb
    w_k = kernel.data

    def _seg(src, ki, kj):
        return src[:, ki : ki + stride * out_h : stride, kj : kj + stride * out_w : stride, :]

    # per-offset accumulation: k*k thin matmuls on contiguous segment
    # copies beat materialising the (positions x kh*kw*c) patch matrix on
    # this memory system; the segments are kept for the weight gradient
    segs = []
    acc = None
    for ki in range(kh):
        for kj in range(kw):
            seg2d = np.ascontiguousarray(_seg(xp, ki, kj)).reshape(-1, c)
            segs.append(seg2d)
            part = seg2d @ w_k[ki, kj]
            if acc is None:
                acc = part
            else:
                acc += part
    if bias is not None:
        acc += bias.data
    y = acc.reshape(n, out_h, out_w, c_out)

    def backward_fn(gy):
        gyb = gy[None] if squeeze else gy
        gy2d = gyb.reshape(n * out_h * out_w, c_out)
        g_w = np.empty_like(w_k)
        need_x = x.requires_grad
        gxp = np.zeros_like(xp) if need_x else None
        for idx, (ki, kj) in enumerate((a, b) for a in range(kh) for b in range(kw)):
            g_w[ki, kj] = segs[idx].T @ gy2d
            if need_x:
                view = _seg(gxp, ki, kj)
                view += (gy2d @ w_k[ki, kj].T).reshape(n, out_h, out_w, c)
        g_b = gy2d.sum(axis=0) if bias is not None else None
        g_x = None
        if need_x:
            g_x = gxp[:, padding : padding + h, padding : padding + w, :] if padding else gxp
            if squeeze:
                g_x = g_x[0]
        return (g_x, g_w, g_b)

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _emit(tape, y[0] if squeeze else y, inputs, backward_fn)


def deconv2d(tape, x: Tensor, kernel: Tensor, stride: int) -> Tensor:
    """Transposed convolution upsampling extents by exactly ``stride``.

    The full scatter output has extents (h-1)*stride + kh; the margin
    kh - stride is cropped symmetrically so the result is exactly
    (h*stride, w*stride). Kernels smaller than the stride cannot reach
    that extent and are rejected.
    """
    xb, squeeze = _as_batched(x.data)
    n, h, w, c = xb.shape
    kh, kw, c_in, c_out = kernel.data.shape
    if c_in != c:
        raise ValueError(
            f"deconv2d channel mismatch: input has {c} channels, kernel expects {c_in}"
        )
    if kh < stride or kw < stride:
        raise ValueError(
            f"deconv2d kernel {kh}x{kw} with stride {stride} cannot produce a "
            f"{stride}x-upsampled output"
        )
    full_h = (h - 1) * stride + kh
    full_w = (w - 1) * stride + kw
    lo_h = (kh - stride) // 2
    lo_w = (kw - stride) // 2
    out_h, out_w = h * stride, w * stride

    w_k = kernel.data
    x2d = np.ascontiguousarray(xb).reshape(n * h * w, c)
    y_full = np.zeros((n, full_h, full_w, c_out), dtype=x2d.dtype)

    def _seg(src, ki, kj):
        return src[:, ki : ki + stride * h : stride, kj : kj + stride * w : stride, :]

    for ki in range(kh):
        for kj in range(kw):
            view = _seg(y_full, ki, kj)
            view += (x2d @ w_k[ki, kj]).reshape(n, h, w, c_out)
    y = y_full[:, lo_h : lo_h + out_h, lo_w : lo_w + out_w, :]

    def backward_fn(gy):
        gyb = gy[None] if squeeze else gy
        gy_full = np.zeros((n, full_h, full_w, c_out), dtype=gyb.dtype)
        gy_full[:, lo_h : lo_h + out_h, lo_w : lo_w + out_w, :] = gyb
        g_x = None
        g_w = np.empty_like(w_k)
        for ki in range(kh):
            for kj in range(kw):
                gseg = np.ascontiguousarray(_seg(gy_full, ki, kj)).reshape(n * h * w, c_out)
                g_w[ki, kj] = x2d.T @ gseg
                part = gseg @ w_k[ki, kj].T
                if g_x is None:
                    g_x = part
                else:
                    g_x += part
        g_x = g_x.reshape(n, h, w, c)
        if squeeze:
            g_x = g_x[0]
        return (g_x, g_w)

    return _emit(tape, y[0] if squeeze else y, (x, kernel), backward_fn)


def max_pool2d(tape, x: Tensor, window: int, stride: int) -> Tensor:
    """Max pooling in ceil mode: a trailing partial window is kept.

    Backward routes the gradient to the argmax position of each window,
    first occurrence (row-major within the window) on ties.
    """
    xb, squeeze = _as_batched(x.data)
    n, h, w, c = xb.shape
    if window < 1 or stride < 1:
        raise ValueError(f"max_pool2d needs positive window and stride, got {window}, {stride}")
    out_h = max(1, -(-(h - window) // stride) + 1)
    out_w = max(1, -(-(w - window) // stride) + 1)
    pad_h = (out_h - 1) * stride + window - h
    pad_w = (out_w - 1) * stride + window - w
    if pad_h or pad_w:
        xp = np.pad(xb, ((0, 0), (0, pad_h), (0, pad_w), (0, 0)), constant_values=-np.inf)
    else:
        xp = xb
    cols = _gather_patches(xp, window, window, stride, out_h, out_w)
    flat = cols.reshape(n, out_h, out_w, window * window, c)
    arg = flat.argmax(axis=3)  # first occurrence on ties
    y = np.take_along_axis(flat, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]

    def backward_fn(gy):
        gyb = gy[None] if squeeze else gy
        gcols = np.zeros_like(flat)
        np.put_along_axis(gcols, arg[:, :, :, None, :], gyb[:, :, :, None, :], axis=3)
        gxp = np.zeros_like(xp)
        _scatter_patches_add(
            gxp, gcols.reshape(n, out_h, out_w, window, window, c), window, window, stride, out_h, out_w
        )
        g_x = gxp[:, :h, :w, :]
        if squeeze:
            g_x = g_x[0]
        return (g_x,)

    return _emit(tape, y[0] if squeeze else y, (x,), backward_fn)


def tanh(tape, x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward_fn(gy):
        return (gy * (1.0 - y * y),)

    return _emit(tape, y, (x,), backward_fn)


def linear(tape, x: Tensor, weight: Tensor, bias) -> Tensor:
    """weight @ x + bias for a vector, or row-wise for a (n, p) batch."""
    q, p = weight.data.shape
    xd = x.data
    if xd.shape[-1] != p or xd.ndim > 2:
        raise ValueError(
            f"linear expects input of length {p}, got shape {xd.shape} "
            f"(weight {weight.data.shape})"
        )
    y = xd @ weight.data.T
    if bias is not None:
        if bias.data.shape != (q,):
            raise ValueError(f"linear bias shape {bias.data.shape} != ({q},)")
        y = y + bias.data

    def backward_fn(gy):
        g_x = gy @ weight.data
        if xd.ndim == 1:
            g_w = np.outer(gy, xd)
            g_b = gy.copy() if bias is not None else None
        else:
            g_w = gy.T @ xd
            g_b = gy.sum(axis=0) if bias is not None else None
        return (g_x, g_w, g_b)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _emit(tape, y, inputs, backward_fn)


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------


def _check_same_shape(op, a, b):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op} shape mismatch: {a.data.shape} vs {b.data.shape}")


def add(tape, a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _emit(tape, a.data + b.data, (a, b), lambda gy: (gy, gy))


def sub(tape, a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return _emit(tape, a.data - b.data, (a, b), lambda gy: (gy, -gy))


def mul(tape, a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    return _emit(tape, a.data * b.data, (a, b), lambda gy: (gy * b.data, gy * a.data))


def scale(tape, x: Tensor, c: float) -> Tensor:
    return _emit(tape, x.data * c, (x,), lambda gy: (gy * c,))


def negate(tape, x: Tensor) -> Tensor:
    return scale(tape, x, -1.0)


def add_const(tape, x: Tensor, c: float) -> Tensor:
    return _emit(tape, x.data + c, (x,), lambda gy: (gy,))


def sum_all(tape, x: Tensor) -> Tensor:
    xd = x.data
    return _emit(tape, np.asarray(xd.sum(), dtype=xd.dtype), (x,), lambda gy: (np.broadcast_to(gy, xd.shape).copy(),))


def relu(tape, x: Tensor) -> Tensor:
    """max(x, 0); the subgradient at exactly 0 is taken as 0."""
    mask = x.data > 0
    return _emit(tape, np.where(mask, x.data, 0.0), (x,), lambda gy: (gy * mask,))


def maximum(tape, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; the gradient goes to ``a`` on ties."""
    _check_same_shape("maximum", a, b)
    take_a = a.data >= b.data
    y = np.where(take_a, a.data, b.data)
    return _emit(tape, y, (a, b), lambda gy: (gy * take_a, gy * ~take_a))


def concat_channels(tape, parts) -> Tensor:
    """Concatenate along the last (channel) axis."""
    parts = list(parts)
    base = parts[0].data.shape[:-1]
    for p in parts[1:]:
        if p.data.shape[:-1] != base:
            raise ValueError(
                f"concat_channels extent mismatch: {p.data.shape} vs {parts[0].data.shape}"
            )
    widths = [p.data.shape[-1] for p in parts]
    y = np.concatenate([p.data for p in parts], axis=-1)
    offsets = np.cumsum([0] + widths)

    def backward_fn(gy):
        return tuple(gy[..., offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _emit(tape, y, tuple(parts), backward_fn)


def reshape(tape, x: Tensor, shape) -> Tensor:
    old = x.data.shape
    return _emit(tape, x.data.reshape(shape), (x,), lambda gy: (gy.reshape(old),))


def take_row(tape, x: Tensor, i: int) -> Tensor:
    """Select row ``i`` of a 2-d tensor."""
    n = x.data.shape[0]
    if not 0 <= i < n:
        raise ValueError(f"take_row index {i} out of range for {x.data.shape}")

    def backward_fn(gy):
        g = np.zeros_like(x.data)
        g[i] = gy
        return (g,)

    return _emit(tape, x.data[i], (x,), backward_fn)


# ---------------------------------------------------------------------------
# verification oracle
# ---------------------------------------------------------------------------


def grad_check(fn, wrt, eps: float = 1e-5, max_coords=None, rng=None) -> float:
    """Compare tape gradients of a scalar graph against central differences.

    ``fn(tape)`` must rebuild the graph from the current ``.data`` of the
    tensors in ``wrt`` and return a scalar Tensor. Returns the max over
    checked coordinates of |analytic - numeric| / max(1, |analytic|,
    |numeric|). Checks every coordinate unless ``max_coords`` limits the
    per-tensor sample (drawn from ``rng``). Run in double precision:
    central differences are unreliable in single.
    """
    for t in wrt:
        t.requires_grad = True
        t.zero_grad()
    tape = Tape()
    loss = fn(tape)
    backward(tape, loss)

    worst = 0.0
    for t in wrt:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        aflat = analytic.reshape(-1)
        if max_coords is not None and flat.size > max_coords:
            if rng is None:
                rng = np.random.default_rng(0)
            idxs = rng.choice(flat.size, size=max_coords, replace=False)
        else:
            idxs = range(flat.size)
        for i in idxs:
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = float(fn(None).data)
            flat[i] = saved - eps
            f_minus = float(fn(None).data)
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(float(aflat[i]) - numeric) / max(1.0, abs(float(aflat[i])), abs(numeric))
            worst = max(worst, err)
    return worst
