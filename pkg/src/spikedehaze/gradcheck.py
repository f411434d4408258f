"""Central finite-difference verification of every differentiable operation.

Each check builds small double-precision inputs, compares the analytic
gradients from the tape against central differences, and reports the
worst relative error. Composite checks cover the LIF block, the residual
block and the skip fusion end to end (spike gates excluded by the
stop-gradient convention, so the reference is the gated analytic map).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .blocks import (MlpWeights, NormWeights, SkFusionWeights,
                     SnnBlockWeights, channel_norm, mlp_forward, sk_fusion,
                     snn_block_forward)
from .lif import (DepthwiseWeights, LifParams, OlifBlockWeights,
                  PointwiseWeights, olif_block_forward)
from .losses import PerceptualProxy, l1_loss
from .nnops import conv2d, dwconv2d, pointwise, upsample2x

__all__ = ["CheckResult", "max_relative_error", "run_suite",
           "PRIMITIVE_TOL", "COMPOSITE_TOL"]

PRIMITIVE_TOL = 1e-6
COMPOSITE_TOL = 1e-5
_EPS = 1e-5


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def _analytic(f, leaves):
    ad.clear_tape()
    for t in leaves:
        t.zero_grad()
        t.requires_grad = True
    loss = f()
    ad.backward(loss)
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
             for t in leaves]
    ad.clear_tape()
    return grads


def _numerical(f, leaves, eps=_EPS):
    grads = []
    with ad.no_grad():
        for t in leaves:
            g = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                plus = f().item()
                flat[i] = orig - eps
                minus = f().item()
                flat[i] = orig
                gflat[i] = (plus - minus) / (2.0 * eps)
            grads.append(g)
    return grads


def max_relative_error(f, leaves, eps=_EPS) -> float:
    """Worst elementwise |analytic - numerical| / max(|a|, |n|, 1e-2)."""
    analytic = _analytic(f, leaves)
    numerical = _numerical(f, leaves, eps)
    worst = 0.0
    for a, n in zip(analytic, numerical):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-2)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def _rand(rng, shape):
    return Tensor(rng.standard_normal(shape).astype(np.float64),
                  requires_grad=True)


def _weighted_sum(out: Tensor, rng) -> Tensor:
    # fixed random weighting makes the scalar objective sensitive everywhere
    w = Tensor(rng.standard_normal(out.data.shape))
    return ad.sum_(out * w)


def run_suite(seed: int = 7) -> list[CheckResult]:
    """Run every gradient check; returns one result per operation."""
    results = []

    def check(name, f, leaves, tol=PRIMITIVE_TOL):
        results.append(CheckResult(name, max_relative_error(f, leaves), tol))

    rng = np.random.default_rng(seed)

    x = _rand(rng, (2, 3, 6, 6))
    k = _rand(rng, (4, 3, 3, 3))
    b = _rand(rng, (4,))
    check("conv2d", lambda: _weighted_sum(
        conv2d(x, k, b, stride=1, padding=1), np.random.default_rng(1)),
        [x, k, b])

    ks = _rand(rng, (4, 3, 3, 3))
    x7 = _rand(rng, (2, 3, 7, 7))
    check("conv2d_stride2", lambda: _weighted_sum(
        conv2d(x7, ks, None, stride=2, padding=1), np.random.default_rng(2)),
        [x7, ks])

    dk = _rand(rng, (3, 1, 3, 3))
    db = _rand(rng, (3,))
    check("dwconv2d", lambda: _weighted_sum(
        dwconv2d(x, dk, db), np.random.default_rng(3)), [x, dk, db])

    pw = _rand(rng, (5, 3))
    pb = _rand(rng, (5,))
    check("pointwise", lambda: _weighted_sum(
        pointwise(x, pw, pb), np.random.default_rng(4)), [x, pw, pb])

    a2 = _rand(rng, (2, 3, 4, 4))
    b2 = _rand(rng, (2, 3, 4, 4))
    check("add", lambda: _weighted_sum(a2 + b2, np.random.default_rng(5)),
          [a2, b2])
    check("mul", lambda: _weighted_sum(a2 * b2, np.random.default_rng(6)),
          [a2, b2])
    check("gelu", lambda: _weighted_sum(ad.gelu(a2),
                                        np.random.default_rng(7)), [a2])
    # keep relu/abs/max inputs away from their kinks
    shifted = Tensor(a2.data + 0.05 * np.sign(a2.data), requires_grad=True)
    check("relu", lambda: _weighted_sum(ad.relu(shifted),
                                        np.random.default_rng(8)), [shifted])
    check("softmax", lambda: _weighted_sum(ad.softmax(a2, axis=1),
                                           np.random.default_rng(9)), [a2])
    check("max_scalar", lambda: _weighted_sum(
        ad.max_scalar(shifted, 0.25), np.random.default_rng(10)), [shifted])
    vth = Tensor(np.asarray(0.25, dtype=np.float64), requires_grad=True)
    check("floor_at", lambda: _weighted_sum(
        ad.floor_at(shifted, vth), np.random.default_rng(11)), [shifted, vth])
    check("global_avg_pool", lambda: _weighted_sum(
        ad.global_avg_pool(a2), np.random.default_rng(12)), [a2])
    check("mean", lambda: ad.mean(ad.square(a2)), [a2])
    check("l1_loss", lambda: l1_loss(shifted, Tensor(np.zeros_like(
        shifted.data))), [shifted])

    uw = _rand(rng, (8, 4))
    ub = _rand(rng, (8,))
    x4 = _rand(rng, (1, 4, 4, 4))
    check("upsample2x", lambda: _weighted_sum(
        upsample2x(x4, uw, ub), np.random.default_rng(13)), [x4, uw, ub])

    nrm = NormWeights(scale=_rand(rng, (4,)), shift=_rand(rng, (4,)))
    check("channel_norm", lambda: _weighted_sum(
        channel_norm(x4, nrm), np.random.default_rng(14)),
        [x4, nrm.scale, nrm.shift], COMPOSITE_TOL)

    mlp = MlpWeights(
        fc1=PointwiseWeights(weight=_rand(rng, (8, 4)), bias=_rand(rng, (8,))),
        fc2=PointwiseWeights(weight=_rand(rng, (4, 8)), bias=_rand(rng, (4,))))
    check("mlp", lambda: _weighted_sum(
        mlp_forward(x4, mlp), np.random.default_rng(15)),
        [x4, mlp.fc1.weight, mlp.fc1.bias, mlp.fc2.weight, mlp.fc2.bias])

    skw = SkFusionWeights(
        reduce=PointwiseWeights(weight=_rand(rng, (2, 4)),
                                bias=_rand(rng, (2,))),
        expand=PointwiseWeights(weight=_rand(rng, (8, 2)),
                                bias=_rand(rng, (8,))))
    y4 = _rand(rng, (1, 4, 4, 4))
    check("sk_fusion", lambda: _weighted_sum(
        sk_fusion(x4, y4, skw), np.random.default_rng(16)),
        [x4, y4, skw.reduce.weight, skw.reduce.bias,
         skw.expand.weight, skw.expand.bias], COMPOSITE_TOL)

    olif, xo = _olif_fixture(rng)
    olif_leaves = [xo,
                   olif.dw.kernel, olif.dw.bias,
                   olif.w_h.weight, olif.w_h.bias,
                   olif.w_v.weight, olif.w_v.bias,
                   olif.merge.weight, olif.merge.bias,
                   olif.lif_h.tau, olif.lif_h.v_th,
                   olif.lif_v.tau, olif.lif_v.v_th]
    check("olif_block", lambda: _weighted_sum(
        olif_block_forward(xo, olif, 4), np.random.default_rng(17)),
        olif_leaves, COMPOSITE_TOL)

    snn = SnnBlockWeights(
        norm1=NormWeights(scale=_rand(rng, (4,)), shift=_rand(rng, (4,))),
        olif=olif,
        norm2=NormWeights(scale=_rand(rng, (4,)), shift=_rand(rng, (4,))),
        mlp=mlp, drop_path_rate=0.0)
    snn_leaves = olif_leaves + [snn.norm1.scale, snn.norm1.shift,
                                snn.norm2.scale, snn.norm2.shift,
                                mlp.fc1.weight, mlp.fc1.bias,
                                mlp.fc2.weight, mlp.fc2.bias]
    check("snn_block", lambda: _weighted_sum(
        snn_block_forward(xo, snn, 4), np.random.default_rng(18)),
        snn_leaves, COMPOSITE_TOL)

    check("composite_conv_gelu_pool", lambda: ad.sum_(ad.global_avg_pool(
        ad.gelu(conv2d(x, k, b, padding=1)))), [x, k, b], COMPOSITE_TOL)

    proxy = PerceptualProxy(seed=0)
    img_a = Tensor(np.random.default_rng(seed + 3)
                   .random((1, 3, 8, 8)), requires_grad=True)
    img_b = Tensor(np.random.default_rng(seed + 4).random((1, 3, 8, 8)))
    check("perceptual_proxy", lambda: proxy.distance(img_a, img_b),
          [img_a], COMPOSITE_TOL)

    return results


def _olif_fixture(rng):
    """Small LIF block with scaled-down weights so membrane potentials stay
    clear of the firing threshold (the gate is a step; finite differences
    need a margin)."""
    c = 4

    def small(shape):
        return Tensor(0.3 * rng.standard_normal(shape).astype(np.float64),
                      requires_grad=True)

    olif = OlifBlockWeights(
        dw=DepthwiseWeights(kernel=small((c, 1, 3, 3)), bias=small((c,))),
        w_h=PointwiseWeights(weight=small((c, c)), bias=small((c,))),
        w_v=PointwiseWeights(weight=small((c, c)), bias=small((c,))),
        merge=PointwiseWeights(weight=small((c, 2 * c)), bias=small((c,))),
        lif_h=LifParams(tau=Tensor(np.asarray(0.25, dtype=np.float64),
                                   requires_grad=True),
                        v_th=Tensor(np.asarray(0.25, dtype=np.float64),
                                    requires_grad=True)),
        lif_v=LifParams(tau=Tensor(np.asarray(0.3, dtype=np.float64),
                                   requires_grad=True),
                        v_th=Tensor(np.asarray(0.2, dtype=np.float64),
                                    requires_grad=True)),
    )
    x = Tensor(0.5 * rng.standard_normal((1, c, 8, 8)).astype(np.float64),
               requires_grad=True)
    return olif, x
