"""Spatial neural-network operations: convolutions, resampling, padding.

All convolutions are exact direct cross-correlations (vectorized with
sliding windows, no FFT approximation). Layout is NCHW, row-major,
W fastest.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor, ShapeError, _record

__all__ = ["conv2d", "dwconv2d", "pointwise", "depth_to_space",
           "downsample2x", "upsample2x", "pad_reflect", "pad_zero", "crop"]


def _squeeze_kernel(kernel: Tensor) -> Tensor:
    from .autodiff import reshape
    cout, cin = kernel.data.shape[:2]
    return reshape(kernel, (cout, cin))


def _pad_spatial(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation, kernel (Cout, Cin, k, k), bias (Cout,)."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError("conv2d expects rank-4 input and kernel")
    n, cin, h, w = x.data.shape
    cout, kcin, kh, kw = kernel.data.shape
    if kcin != cin:
        raise ShapeError(f"conv2d channel mismatch: input {cin}, kernel {kcin}")
    if (h + 2 * padding - kh) % stride or (w + 2 * padding - kw) % stride:
        raise ShapeError("conv2d output extent is not integral")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d output would be empty")

    if kh == kw == 1 and stride == 1 and padding == 0:
        # same contraction as pointwise, so the two agree bit-for-bit
        out = pointwise(x, _squeeze_kernel(kernel), bias)
        return out

    xp = _pad_spatial(x.data, padding)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_data = np.einsum("nchwij,ocij->nohw", win, kernel.data, optimize=True)
    out_data = out_data.astype(x.data.dtype, copy=False)
    if bias is not None:
        if bias.data.shape != (cout,):
            raise ShapeError("conv2d bias must have one entry per output channel")
        out_data = out_data + bias.data[None, :, None, None]
    out = Tensor(out_data)

    def bwd(g):
        gk = np.einsum("nchwij,nohw->ocij", win, g, optimize=True)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                    np.einsum("nohw,oc->nchw", g, kernel.data[:, :, i, j],
                              optimize=True)
        gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding \
            else gxp
        gb = None if bias is None else g.sum(axis=(0, 2, 3))
        return (gx.astype(x.data.dtype, copy=False),
                gk.astype(x.data.dtype, copy=False), gb)

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _record(inputs, out, bwd if bias is not None else
                   (lambda g: bwd(g)[:2]))


def dwconv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Depthwise conv: one (1, k, k) plane per channel, same padding."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError("dwconv2d expects rank-4 input and kernel")
    n, c, h, w = x.data.shape
    kc, one, kh, kw = kernel.data.shape
    if kc != c or one != 1:
        raise ShapeError(f"dwconv2d kernel channels {kc} != input channels {c}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("dwconv2d requires odd kernel extents")
    p = kh // 2
    xp = _pad_spatial(x.data, p)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    kern = kernel.data[:, 0]
    out_data = np.einsum("nchwij,cij->nchw", win, kern, optimize=True)
    out_data = out_data.astype(x.data.dtype, copy=False)
    if bias is not None:
        out_data = out_data + bias.data[None, :, None, None]
    out = Tensor(out_data)

    def bwd(g):
        gk = np.einsum("nchwij,nchw->cij", win, g, optimize=True)[:, None]
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + h, j:j + w] += g * kern[None, :, i, j, None, None]
        gx = gxp[:, :, p:p + h, p:p + w]
        gb = None if bias is None else g.sum(axis=(0, 2, 3))
        return (gx.astype(x.data.dtype, copy=False),
                gk.astype(x.data.dtype, copy=False), gb)

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _record(inputs, out, bwd if bias is not None else
                   (lambda g: bwd(g)[:2]))


def pointwise(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-pixel channel-mixing projection, weight (Cout, Cin)."""
    if x.data.ndim != 4 or weight.data.ndim != 2:
        raise ShapeError("pointwise expects rank-4 input and rank-2 weight")
    n, cin, h, w = x.data.shape
    cout, wcin = weight.data.shape
    if wcin != cin:
        raise ShapeError(f"pointwise channel mismatch: input {cin}, weight {wcin}")
    out_data = np.einsum("oc,nchw->nohw", weight.data, x.data, optimize=True)
    out_data = out_data.astype(x.data.dtype, copy=False)
    if bias is not None:
        out_data = out_data + bias.data[None, :, None, None]
    out = Tensor(out_data)

    def bwd(g):
        gw = np.einsum("nohw,nchw->oc", g, x.data, optimize=True)
        gx = np.einsum("oc,nohw->nchw", weight.data, g, optimize=True)
        gb = None if bias is None else g.sum(axis=(0, 2, 3))
        return (gx.astype(x.data.dtype, copy=False),
                gw.astype(x.data.dtype, copy=False), gb)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _record(inputs, out, bwd if bias is not None else
                   (lambda g: bwd(g)[:2]))


def depth_to_space(x: Tensor, factor: int = 2) -> Tensor:
    """(N, C*f*f, H, W) -> (N, C, f*H, f*W); channel block (a, b, c, d)
    maps to the 2x2 plane [[a, b], [c, d]] for f = 2."""
    n, c, h, w = x.data.shape
    f = factor
    if c % (f * f):
        raise ShapeError("depth_to_space channel count not divisible by f^2")
    co = c // (f * f)
    out_data = (x.data.reshape(n, co, f, f, h, w)
                .transpose(0, 1, 4, 2, 5, 3)
                .reshape(n, co, h * f, w * f))
    out = Tensor(np.ascontiguousarray(out_data))

    def bwd(g):
        gx = (g.reshape(n, co, h, f, w, f)
              .transpose(0, 1, 3, 5, 2, 4)
              .reshape(n, c, h, w))
        return (np.ascontiguousarray(gx),)

    return _record((x,), out, bwd)


def pad_zero(x: Tensor, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Zero-pad spatial edges (possibly asymmetric)."""
    if top == bottom == left == right == 0:
        return x
    n, c, h, w = x.data.shape
    out = Tensor(np.pad(x.data, ((0, 0), (0, 0), (top, bottom),
                                 (left, right))))

    def bwd(g):
        return (g[:, :, top:top + h, left:left + w].copy(),)

    return _record((x,), out, bwd)


def downsample2x(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """3x3 stride-2 conv doubling the channel count, halving H and W.

    Padding is one zero row/column on top/left only, so even extents map
    exactly to half (the last row of a symmetric pad would be unused).
    """
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ShapeError("downsample2x requires even spatial extents")
    if kernel.data.shape != (2 * c, c, 3, 3):
        raise ShapeError("downsample2x kernel must map C -> 2C with a 3x3 tap")
    return conv2d(pad_zero(x, 1, 0, 1, 0), kernel, bias, stride=2, padding=0)


def upsample2x(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Pointwise C -> 2C followed by depth-to-space 2, yielding C/2 channels."""
    n, c, h, w = x.data.shape
    if weight.data.shape != (2 * c, c):
        raise ShapeError("upsample2x weight must map C -> 2C")
    return depth_to_space(pointwise(x, weight, bias), 2)


def pad_reflect(x: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Reflect-pad the bottom/right spatial edges by (pad_h, pad_w)."""
    if pad_h == 0 and pad_w == 0:
        return x
    n, c, h, w = x.data.shape
    if pad_h >= h or pad_w >= w:
        raise ShapeError("reflect padding wider than the image")
    out = Tensor(np.pad(x.data, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)),
                        mode="reflect"))

    def bwd(g):
        gx = g[:, :, :h, :w].copy()
        if pad_h:
            gx[:, :, h - 1 - pad_h:h - 1] += g[:, :, h:, :w][:, :, ::-1]
        if pad_w:
            gx[:, :, :, w - 1 - pad_w:w - 1] += g[:, :, :h, w:][:, :, :, ::-1]
        # corner block reflects across both axes
        if pad_h and pad_w:
            gx[:, :, h - 1 - pad_h:h - 1, w - 1 - pad_w:w - 1] += \
                g[:, :, h:, w:][:, :, ::-1, ::-1]
        return (gx,)

    return _record((x,), out, bwd)


def crop(x: Tensor, h: int, w: int) -> Tensor:
    """Keep the top-left (h, w) spatial window."""
    full_h, full_w = x.data.shape[2], x.data.shape[3]
    if h == full_h and w == full_w:
        return x
    out = Tensor(x.data[:, :, :h, :w].copy())

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[:, :, :h, :w] = g
        return (gx,)

    return _record((x,), out, bwd)
