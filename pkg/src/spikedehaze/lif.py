"""Orthogonal leaky-integrate-and-fire block.

The block runs a depthwise pre-convolution, then accumulates membrane
potential spatially: the scanned axis is cut into ``g`` contiguous slabs
and a LIF recurrence steps through them (group steps instead of time
steps). The binary spike only gates the next step's leak; the emitted
value is the full-precision floor ``max(u, v_th)`` so gradients flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, ShapeError
from .nnops import dwconv2d, pointwise

__all__ = ["LifParams", "LifState", "OlifBlockWeights",
           "lif_group_step", "directional_scan", "olif_block_forward"]

LIF_INIT_TAU = 0.25
LIF_INIT_VTH = 0.25
U_RESET = 0.0  # forced: the (1 - o) factor zeroes spiked potential


@dataclass
class LifParams:
    """Learnable per-branch leak and firing threshold (both scalars)."""
    tau: Tensor
    v_th: Tensor

    @classmethod
    def init(cls, dtype=np.float32) -> "LifParams":
        return cls(tau=Tensor(np.full((), LIF_INIT_TAU, dtype=dtype),
                              requires_grad=True),
                   v_th=Tensor(np.full((), LIF_INIT_VTH, dtype=dtype),
                               requires_grad=True))


@dataclass
class LifState:
    """Membrane potential and the binary spike map of the last step."""
    u: Tensor
    o: np.ndarray  # {0, 1}, detached by construction

    @classmethod
    def zeros(cls, shape, dtype=np.float32) -> "LifState":
        return cls(u=Tensor(np.zeros(shape, dtype=dtype)),
                   o=np.zeros(shape, dtype=dtype))


@dataclass
class PointwiseWeights:
    weight: Tensor
    bias: Tensor


@dataclass
class DepthwiseWeights:
    kernel: Tensor
    bias: Tensor


@dataclass
class OlifBlockWeights:
    """Depthwise kernel, per-branch scan projections, merge projection.

    Both directional branches see the full channel width; the merge
    projects the concatenated 2C branch outputs back to C.
    """
    dw: DepthwiseWeights
    w_h: PointwiseWeights
    w_v: PointwiseWeights
    merge: PointwiseWeights
    lif_h: LifParams
    lif_v: LifParams


def lif_group_step(state: LifState, y: Tensor, params: LifParams):
    """One group step: leak-and-reset, integrate, spike, emit the floor.

    u' = tau * u * (1 - o) + y;  o' = [u' > v_th];  r = max(u', v_th).
    The spike map is detached (stop-gradient); r carries the gradient.
    """
    if y.data.shape != state.u.data.shape:
        raise ShapeError("lif_group_step input shape differs from state shape")
    keep = Tensor(1.0 - state.o)  # constant: spike gate is stop-gradient
    u_new = params.tau * (state.u * keep) + y
    o_new = (u_new.data > params.v_th.data).astype(u_new.data.dtype)
    r = ad.floor_at(u_new, params.v_th)
    return LifState(u=u_new, o=o_new), r


def directional_scan(x: Tensor, axis: str, g: int,
                     proj: PointwiseWeights, params: LifParams) -> Tensor:
    """Scan the H ('vertical') or W ('horizontal') axis in g group steps.

    Each slab is projected through the shared channel-mixing weight and
    fed to the LIF recurrence; the per-group floors are written back to
    their slab positions. Output shape equals input shape.
    """
    if axis not in ("horizontal", "vertical"):
        raise ValueError(f"unknown scan axis {axis!r}")
    dim = 3 if axis == "horizontal" else 2
    n, c, h, w = x.data.shape
    extent = x.data.shape[dim]
    if extent % g:
        raise ShapeError(f"scan extent {extent} not divisible by group count {g}")
    slab = extent // g
    slab_shape = list(x.data.shape)
    slab_shape[dim] = slab
    state = LifState.zeros(tuple(slab_shape), dtype=x.data.dtype)
    outputs = []
    for i in range(g):
        piece = ad.narrow(x, dim, i * slab, slab)
        y = pointwise(piece, proj.weight, proj.bias)
        state, r = lif_group_step(state, y, params)
        outputs.append(r)
    return ad.concat(outputs, axis=dim)


def olif_block_forward(x: Tensor, weights: OlifBlockWeights, g: int) -> Tensor:
    """Depthwise conv, horizontal and vertical scans, merge. Shape preserved."""
    n, c, h, w = x.data.shape
    if c % 2:
        raise ShapeError("olif block requires an even channel count")
    if h % g or w % g:
        raise ShapeError("spatial extents must be divisible by the group count")
    z = dwconv2d(x, weights.dw.kernel, weights.dw.bias)
    hor = directional_scan(z, "horizontal", g, weights.w_h, weights.lif_h)
    ver = directional_scan(z, "vertical", g, weights.w_v, weights.lif_v)
    return pointwise(ad.concat((hor, ver), axis=1),
                     weights.merge.weight, weights.merge.bias)
