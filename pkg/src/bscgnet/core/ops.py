"""Differentiable operations on rank-4 tensors.

Conventions shared by every op here:

* bilinear sampling uses the align-corners-false grid (pixel centres at
  ``(i + 0.5) / size``) and replicates border values outside the map;
* flow fields hold raw pixel displacements, channel 0 = dx, channel 1 = dy;
* max pooling breaks ties by the first element in row-major window order.
"""
from __future__ import annotations

import contextlib
from functools import lru_cache
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

from .tensor import ShapeError, Tensor, make_node

# ---------------------------------------------------------------------------
# FLOP accounting (one multiply-add counts as two FLOPs)

_FLOP_LOG: Optional[list] = None


@contextlib.contextmanager
def count_flops() -> Iterator[list]:
    """Record ``(op_name, output_shape, flops)`` for every op run inside the block."""
    global _FLOP_LOG
    previous = _FLOP_LOG
    _FLOP_LOG = []
    try:
        yield _FLOP_LOG
    finally:
        _FLOP_LOG = previous


def _log(op: str, shape: tuple, flops: int) -> None:
    if _FLOP_LOG is not None:
        _FLOP_LOG.append((op, tuple(shape), int(flops)))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check4(x: Tensor, op: str, operand: str = "x") -> None:
    if x.data.ndim != 4:
        raise ShapeError(f"{op}: {operand} must be rank-4 (n, c, h, w), got shape {x.shape}")


# ---------------------------------------------------------------------------
# convolution


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, dilation: int,
            ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        hs = i * dilation
        for j in range(kw):
            ws = j * dilation
            patch = xp[:, :, hs:hs + stride * (ho - 1) + 1:stride, ws:ws + stride * (wo - 1) + 1:stride]
            cols[:, i, j] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * ho * wo)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
           padding: int = 0, dilation: int = 1) -> Tensor:
    """Cross-correlation of ``x`` with ``weight[out_c, in_c, kh, kw]``."""
    _check4(x, "conv2d")
    _check4(weight, "conv2d", "weight")
    n, c, h, w = x.shape
    oc, ic, kh, kw = weight.shape
    if c != ic:
        raise ShapeError(f"conv2d: weight expects {ic} input channels, x has shape {x.shape} "
                         f"(weight shape {weight.shape})")
    if bias is not None and bias.shape != (oc,):
        raise ShapeError(f"conv2d: bias must have shape ({oc},), got {bias.shape}")
    ho = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    wo = (w + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: output would be empty for input {x.shape}, kernel {kh}x{kw}, "
                         f"stride {stride}, padding {padding}, dilation {dilation}")

    pointwise = kh == kw == 1 and stride == 1 and padding == 0
    if pointwise:
        cols = x.data.transpose(1, 0, 2, 3).reshape(c, n * h * w)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
        cols = _im2col(xp, kh, kw, stride, dilation, ho, wo)
    w2 = weight.data.reshape(oc, ic * kh * kw)
    out = (w2 @ cols).reshape(oc, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    else:
        out = np.ascontiguousarray(out)
    _log("conv2d", out.shape, 2 * n * oc * ho * wo * ic * kh * kw)

    def backward_fn(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(oc, n * ho * wo)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = w2.T @ g2
            if pointwise:
                gx = dcols.reshape(c, n, h, w).transpose(1, 0, 2, 3)
            else:
                dcols = dcols.reshape(c, kh, kw, n, ho, wo)
                dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
                for i in range(kh):
                    hs = i * dilation
                    for j in range(kw):
                        ws = j * dilation
                        dxp[:, :, hs:hs + stride * (ho - 1) + 1:stride,
                            ws:ws + stride * (wo - 1) + 1:stride] += dcols[:, i, j].transpose(1, 0, 2, 3)
                gx = dxp[:, :, padding:padding + h, padding:padding + w]
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward_fn)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
                     stride: int = 1) -> Tensor:
    """Transposed convolution with ``weight[in_c, out_c, kh, kw]``; no padding.

    Output size is ``(in - 1) * stride + kernel`` along each spatial axis.
    """
    _check4(x, "conv_transpose2d")
    _check4(weight, "conv_transpose2d", "weight")
    if stride < 1:
        raise ShapeError(f"conv_transpose2d: stride must be >= 1, got {stride}")
    n, c, h, w = x.shape
    ic, oc, kh, kw = weight.shape
    if c != ic:
        raise ShapeError(f"conv_transpose2d: weight expects {ic} input channels, x has shape {x.shape}")
    if bias is not None and bias.shape != (oc,):
        raise ShapeError(f"conv_transpose2d: bias must have shape ({oc},), got {bias.shape}")
    ho, wo = (h - 1) * stride + kh, (w - 1) * stride + kw

    xf = x.data.transpose(1, 0, 2, 3).reshape(ic, n * h * w)
    w2 = weight.data.reshape(ic, oc * kh * kw)
    cols = (w2.T @ xf).reshape(oc, kh, kw, n, h, w)
    out = np.zeros((n, oc, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * (h - 1) + 1:stride, j:j + stride * (w - 1) + 1:stride] += \
                cols[:, i, j].transpose(1, 0, 2, 3)
    if bias is not None:
        out += bias.data[None, :, None, None]
    _log("conv_transpose2d", out.shape, 2 * n * ic * h * w * oc * kh * kw)

    def backward_fn(g):
        gcols = np.empty((oc, kh, kw, n, h, w), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gcols[:, i, j] = g[:, :, i:i + stride * (h - 1) + 1:stride,
                                   j:j + stride * (w - 1) + 1:stride].transpose(1, 0, 2, 3)
        gcols = gcols.reshape(oc * kh * kw, n * h * w)
        gx = (w2 @ gcols).reshape(ic, n, h, w).transpose(1, 0, 2, 3) if x.requires_grad else None
        gw = (xf @ gcols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward_fn)


# ---------------------------------------------------------------------------
# resampling


@lru_cache(maxsize=256)
def _interp_matrix(in_size: int, out_size: int) -> np.ndarray:
    # rows: output positions; columns: input positions
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, in_size - 1)
    frac = src - i0
    m = np.zeros((out_size, in_size))
    rows = np.arange(out_size)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    m.setflags(write=False)
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _check4(x, "bilinear_resize")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bilinear_resize: target size must be positive, got {out_h}x{out_w}")
    n, c, h, w = x.shape
    if (h, w) == (out_h, out_w):
        out = x.data.copy()
        return make_node(out, (x,), lambda g: (g,))
    ry = _interp_matrix(h, out_h).astype(x.dtype, copy=False)
    rx = _interp_matrix(w, out_w).astype(x.dtype, copy=False)
    out = np.matmul(np.matmul(ry, x.data), rx.T)
    _log("bilinear_resize", out.shape, 8 * out.size)

    def backward_fn(g):
        return (np.matmul(np.matmul(ry.T, g), rx),)

    return make_node(out, (x,), backward_fn)


def resize_to(x: Tensor, ref_shape: Sequence[int]) -> Tensor:
    """Bilinearly resize ``x`` to the spatial size of ``ref_shape`` (``(.., .., h, w)``)."""
    return bilinear_resize(x, int(ref_shape[-2]), int(ref_shape[-1]))


def grid_sample(x: Tensor, flow: Tensor) -> Tensor:
    """Warp ``x`` by a pixel-unit flow: out[n,c,i,j] = x[n,c](i + dy, j + dx).

    Sample coordinates are clamped to the map (border replication).
    """
    _check4(x, "grid_sample")
    _check4(flow, "grid_sample", "flow")
    n, c, h, w = x.shape
    if flow.shape != (n, 2, h, w):
        raise ShapeError(f"grid_sample: flow must have shape {(n, 2, h, w)} to warp x of shape "
                         f"{x.shape}, got {flow.shape}")
    fd = flow.data.astype(np.float64)
    ys = np.arange(h, dtype=np.float64)[None, :, None] + fd[:, 1]
    xs = np.arange(w, dtype=np.float64)[None, None, :] + fd[:, 0]
    # non-finite flow yields NaN output rather than an invalid index
    bad = ~(np.isfinite(ys) & np.isfinite(xs))
    if bad.any():
        ys, xs = np.where(bad, 0.0, ys), np.where(bad, 0.0, xs)
    inside_y = (ys > 0) & (ys < h - 1)
    inside_x = (xs > 0) & (xs < w - 1)
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = ys - y0
    wx = xs - x0

    # block-diagonal sparse sampling matrix over all batch items
    base = (np.arange(n) * h * w)[:, None, None]
    rows = np.broadcast_to(base + np.arange(h * w).reshape(1, h, w), (n, h, w)).ravel()
    corners = [
        (y0, x0, (1 - wy) * (1 - wx)),
        (y0, x1, (1 - wy) * wx),
        (y1, x0, wy * (1 - wx)),
        (y1, x1, wy * wx),
    ]
    r_idx = np.concatenate([rows] * 4)
    c_idx = np.concatenate([(base + yy * w + xx).ravel() for yy, xx, _ in corners])
    vals = np.concatenate([ww.ravel() for _, _, ww in corners]).astype(x.dtype)
    smat = sparse.csr_matrix((vals, (r_idx, c_idx)), shape=(n * h * w, n * h * w))

    xf = x.data.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    out = np.asarray(smat @ xf).reshape(n, h, w, c).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    if bad.any():
        out[np.broadcast_to(bad[:, None], out.shape)] = np.nan
    _log("grid_sample", out.shape, 8 * out.size)

    def backward_fn(g):
        gx = gflow = None
        if x.requires_grad:
            gf = g.transpose(0, 2, 3, 1).reshape(n * h * w, c)
            gx = np.asarray(smat.T @ gf).reshape(n, h, w, c).transpose(0, 3, 1, 2)
        if flow.requires_grad:
            xd = x.data
            nn = np.arange(n)[:, None, None]

            def at(yy, xx):
                return xd[nn, :, yy, xx].transpose(0, 3, 1, 2)  # (n, c, h, w)

            v00, v01, v10, v11 = at(y0, x0), at(y0, x1), at(y1, x0), at(y1, x1)
            wxc, wyc = wx[:, None].astype(x.dtype), wy[:, None].astype(x.dtype)
            d_dy = (1 - wxc) * (v10 - v00) + wxc * (v11 - v01)
            d_dx = (1 - wyc) * (v01 - v00) + wyc * (v11 - v10)
            gdy = (g * d_dy).sum(axis=1) * inside_y
            gdx = (g * d_dx).sum(axis=1) * inside_x
            gflow = np.stack([gdx, gdy], axis=1).astype(flow.dtype)
        return gx, gflow

    return make_node(out, (x, flow), backward_fn)


# ---------------------------------------------------------------------------
# elementwise


def _broadcast_shapes(a: Tensor, b: Tensor, op: str) -> tuple:
    if a.shape == b.shape:
        return a.shape
    if a.data.ndim == 4 and b.data.ndim == 4:
        (na, ca, ha, wa), (nb, cb, hb, wb) = a.shape, b.shape
        if (na, ha, wa) == (nb, hb, wb) and (ca == 1 or cb == 1):
            return (na, max(ca, cb), ha, wa)
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape} "
                     "(only a 1-channel operand may broadcast across channels)")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum(axis=1, keepdims=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    shape = _broadcast_shapes(a, b, "add")
    out = a.data + b.data
    _log("add", shape, out.size)
    return make_node(out, (a, b), lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    shape = _broadcast_shapes(a, b, "mul")
    out = a.data * b.data
    _log("mul", shape, out.size)

    def backward_fn(g):
        ga = _reduce_to(g * b.data, a.shape) if a.requires_grad else None
        gb = _reduce_to(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), backward_fn)


def add_scalar(x: Tensor, value: float) -> Tensor:
    out = x.data + x.data.dtype.type(value)
    _log("add_scalar", out.shape, out.size)
    return make_node(out, (x,), lambda g: (g,))


def mul_scalar(x: Tensor, value: float) -> Tensor:
    scale = x.data.dtype.type(value)
    out = x.data * scale
    _log("mul_scalar", out.shape, out.size)
    return make_node(out, (x,), lambda g: (g * scale,))


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)
    _log("sigmoid", out.shape, out.size)
    return make_node(out, (x,), lambda g: (g * out * (1 - out),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = x.data * mask
    _log("relu", out.shape, out.size)
    return make_node(out, (x,), lambda g: (g * mask,))


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    xs = list(xs)
    if not xs:
        raise ShapeError("concat_channels: need at least one operand")
    for t in xs:
        _check4(t, "concat_channels")
    n, _, h, w = xs[0].shape
    for i, t in enumerate(xs):
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(f"concat_channels: operand {i} has shape {t.shape}, expected "
                             f"n={n}, h={h}, w={w}")
    out = np.concatenate([t.data for t in xs], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in xs])

    def backward_fn(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return make_node(out, xs, backward_fn)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2."""
    _check4(x, "maxpool2")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2: spatial size must be even, got {h}x{w}")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // 2, w // 2, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    _log("maxpool2", out.shape, 3 * out.size)

    def backward_fn(g):
        gw = np.zeros_like(win)
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gx = gw.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return make_node(out, (x,), backward_fn)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean, shape (n, c, 1, 1)."""
    _check4(x, "global_avg_pool")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)
    _log("global_avg_pool", out.shape, x.data.size)
    scale = x.data.dtype.type(1.0 / (h * w))
    return make_node(out, (x,), lambda g: (np.broadcast_to(g * scale, x.shape).copy(),))


def channel_scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply each channel map of ``x`` by the matching entry of ``s[n, c, 1, 1]``."""
    _check4(x, "channel_scale")
    n, c = x.shape[:2]
    if s.shape != (n, c, 1, 1):
        raise ShapeError(f"channel_scale: scales must have shape {(n, c, 1, 1)}, got {s.shape}")
    out = x.data * s.data
    _log("channel_scale", out.shape, out.size)

    def backward_fn(g):
        gx = g * s.data if x.requires_grad else None
        gs = (g * x.data).sum(axis=(2, 3), keepdims=True) if s.requires_grad else None
        return gx, gs

    return make_node(out, (x, s), backward_fn)


def se_layer(x: Tensor, params: dict, reduction: Optional[int] = None) -> Tensor:
    """Squeeze-and-excitation gating.

    ``params`` holds ``w1[hidden, c, 1, 1]``, ``b1``, ``w2[c, hidden, 1, 1]``, ``b2``;
    ``hidden`` must equal ``max(1, c // reduction)`` when ``reduction`` is given.
    """
    _check4(x, "se_layer")
    c = x.shape[1]
    w1, b1, w2, b2 = params["w1"], params["b1"], params["w2"], params["b2"]
    hidden = w1.shape[0]
    expected = (hidden, c, 1, 1), (hidden,), (c, hidden, 1, 1), (c,)
    actual = w1.shape, b1.shape, w2.shape, b2.shape
    if actual != expected:
        raise ShapeError(f"se_layer: parameter shapes {actual} do not fit {c} channels "
                         f"(expected {expected})")
    if reduction is not None and hidden != max(1, c // reduction):
        raise ShapeError(f"se_layer: bottleneck {hidden} != max(1, {c} // {reduction})")
    s = global_avg_pool(x)
    s = relu(conv2d(s, w1, b1))
    s = sigmoid(conv2d(s, w2, b2))
    return channel_scale(x, s)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())
    return make_node(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.mean())
    scale = x.data.dtype.type(1.0 / x.data.size)
    return make_node(out, (x,), lambda g: (np.broadcast_to(g * scale, x.shape).copy(),))


def zeros(shape, dtype=None) -> Tensor:
    from .tensor import get_default_dtype

    return Tensor(np.zeros(shape, dtype=dtype or get_default_dtype()))
