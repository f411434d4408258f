"""Composite layers around the LIF kernel: residual block, MLP, drop path,
channel normalization and the selective skip fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, ShapeError
from .lif import OlifBlockWeights, PointwiseWeights, olif_block_forward
from .nnops import pointwise

__all__ = ["NormWeights", "MlpWeights", "SnnBlockWeights", "SkFusionWeights",
           "channel_norm", "mlp_forward", "drop_path", "snn_block_forward",
           "sk_fusion"]

NORM_EPS = 1e-6
SK_REDUCTION = 8


@dataclass
class NormWeights:
    scale: Tensor  # (C,)
    shift: Tensor  # (C,)


@dataclass
class MlpWeights:
    fc1: PointwiseWeights  # C -> ratio * C
    fc2: PointwiseWeights  # ratio * C -> C


@dataclass
class SnnBlockWeights:
    norm1: NormWeights
    olif: OlifBlockWeights
    norm2: NormWeights
    mlp: MlpWeights
    drop_path_rate: float = 0.0


@dataclass
class SkFusionWeights:
    """Reduce-and-expand perceptron C -> C/r -> 2C; the expand layer is
    zero-initialized so fusion starts as a plain average."""
    reduce: PointwiseWeights
    expand: PointwiseWeights


def channel_norm(x: Tensor, weights: NormWeights,
                 enabled: bool = True) -> Tensor:
    """Normalize each pixel across channels to zero mean / unit variance,
    then apply a per-channel affine. ``enabled=False`` bypasses entirely."""
    if not enabled:
        return x
    c = x.data.shape[1]
    if weights.scale.data.shape != (c,):
        raise ShapeError("channel_norm scale length must equal channel count")
    mu = ad.mean(x, axis=1, keepdims=True)
    centered = x - mu
    var = ad.mean(ad.square(centered), axis=1, keepdims=True)
    normed = centered / ad.sqrt(var + NORM_EPS)
    scale = ad.reshape(weights.scale, (1, c, 1, 1))
    shift = ad.reshape(weights.shift, (1, c, 1, 1))
    return normed * scale + shift


def mlp_forward(x: Tensor, weights: MlpWeights) -> Tensor:
    """Pointwise expand, gelu, pointwise contract; shape preserved."""
    hidden = ad.gelu(pointwise(x, weights.fc1.weight, weights.fc1.bias))
    return pointwise(hidden, weights.fc2.weight, weights.fc2.bias)


def drop_path(branch: Tensor, rate: float, training: bool,
              rng: np.random.Generator | None) -> Tensor:
    """Stochastic depth: zero the whole residual branch per sample with
    probability ``rate``, scaling survivors by 1/(1-rate). Identity in eval."""
    if not training or rate == 0.0:
        return branch
    if not (0.0 <= rate <= 1.0):
        raise ValueError("drop path rate must lie in [0, 1]")
    n = branch.data.shape[0]
    keep = (rng.random(n) >= rate).astype(branch.data.dtype)
    if rate < 1.0:
        keep = keep / (1.0 - rate)
    mask = Tensor(keep.reshape(n, 1, 1, 1))
    return branch * mask


def snn_block_forward(x: Tensor, weights: SnnBlockWeights, g: int,
                      training: bool = False,
                      rng: np.random.Generator | None = None,
                      norm_enabled: bool = True) -> Tensor:
    """Residual pair: LIF sub-block then MLP, each behind drop path."""
    p = weights.drop_path_rate
    x1 = x + drop_path(
        olif_block_forward(channel_norm(x, weights.norm1, norm_enabled),
                           weights.olif, g),
        p, training, rng)
    return x1 + drop_path(
        mlp_forward(channel_norm(x1, weights.norm2, norm_enabled),
                    weights.mlp),
        p, training, rng)


def sk_fusion(a: Tensor, b: Tensor, weights: SkFusionWeights) -> Tensor:
    """Merge two same-shape branches with per-channel softmax weights
    derived from globally pooled features of their sum."""
    if a.data.shape != b.data.shape:
        raise ShapeError("sk_fusion branches must share a shape")
    n, c, _, _ = a.data.shape
    pooled = ad.global_avg_pool(a + b)
    hidden = ad.relu(pointwise(pooled, weights.reduce.weight,
                               weights.reduce.bias))
    logits = pointwise(hidden, weights.expand.weight, weights.expand.bias)
    if logits.data.shape[1] != 2 * c:
        raise ShapeError("sk_fusion perceptron must emit 2 logits per channel")
    stacked = ad.reshape(logits, (n, 2, c, 1, 1))
    w = ad.softmax(stacked, axis=1)
    w_a = ad.reshape(ad.narrow(w, 1, 0, 1), (n, c, 1, 1))
    w_b = ad.reshape(ad.narrow(w, 1, 1, 1), (n, c, 1, 1))
    return a * w_a + b * w_b
