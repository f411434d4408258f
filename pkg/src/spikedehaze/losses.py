"""Training loss: weighted L1 plus a deterministic perceptual distance.

The perceptual term is a seeded random-feature pyramid (three fixed
stride-2 convolutions) measuring mean squared differences between
channel-normalized feature maps. It is a self-contained stand-in for a
pretrained perceptual network; a loader hook for external weights is a
deliberate extension point, not implemented.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, ShapeError
from .nnops import conv2d, pad_reflect

__all__ = ["LossConfig", "PerceptualProxy", "l1_loss", "combined_loss"]

DEFAULT_ALPHA1 = 0.5
_PROXY_CHANNELS = (3, 16, 32, 64)
_PROXY_EPS = 1e-8


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference; subgradient 0 at exact ties."""
    if pred.data.shape != target.data.shape:
        raise ShapeError("l1_loss requires equal shapes")
    return ad.mean(ad.absolute(pred - target))


class PerceptualProxy:
    """Fixed random conv pyramid 3->16->32->64 (3x3, stride 2), seeded."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers = []
        for cin, cout in zip(_PROXY_CHANNELS[:-1], _PROXY_CHANNELS[1:]):
            std = 1.0 / np.sqrt(9 * cin)
            k = rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(np.float32)
            self.layers.append(Tensor(k))  # non-learnable

    def _features(self, x: Tensor) -> list[Tensor]:
        feats = []
        for kernel in self.layers:
            # stride-2 with a 3x3 tap needs odd extents for integral output
            h, w = x.data.shape[2], x.data.shape[3]
            x = pad_reflect(x, h % 2 == 0, w % 2 == 0)
            x = ad.relu(conv2d(x, kernel, stride=2, padding=1))
            feats.append(x)
        return feats

    @staticmethod
    def _unit_normalize(f: Tensor) -> Tensor:
        norm = ad.sqrt(ad.sum_(ad.square(f), axis=1, keepdims=True) + _PROXY_EPS)
        return f / norm

    def distance(self, a: Tensor, b: Tensor) -> Tensor:
        """Mean squared difference of unit-normalized features, layer-averaged."""
        if a.data.shape != b.data.shape:
            raise ShapeError("perceptual distance requires equal shapes")
        terms = []
        for fa, fb in zip(self._features(a), self._features(b)):
            diff = self._unit_normalize(fa) - self._unit_normalize(fb)
            terms.append(ad.mean(ad.square(diff)))
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total * (1.0 / len(terms))


@dataclass
class LossConfig:
    alpha1: float = DEFAULT_ALPHA1
    perceptual: str = "proxy"  # "proxy" or "none"
    proxy_seed: int = 0
    _proxy: PerceptualProxy | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (0.0 <= self.alpha1 <= 1.0):
            raise ValueError("alpha1 must lie in [0, 1]")
        if self.perceptual not in ("proxy", "none"):
            raise ValueError("perceptual must be 'proxy' or 'none'")

    def proxy(self) -> PerceptualProxy:
        if self._proxy is None or self._proxy.seed != self.proxy_seed:
            self._proxy = PerceptualProxy(self.proxy_seed)
        return self._proxy


def combined_loss(pred: Tensor, target: Tensor, config: LossConfig) -> Tensor:
    """alpha1 * L1 + (1 - alpha1) * perceptual distance."""
    loss = config.alpha1 * l1_loss(pred, target)
    if config.perceptual == "proxy" and config.alpha1 < 1.0:
        loss = loss + (1.0 - config.alpha1) * \
            config.proxy().distance(pred, target)
    return loss
