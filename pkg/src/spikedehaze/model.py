"""Five-stage U-Net assembly, forward pass, and cost accounting.

Encoder/decoder ladder for the shipped variants: dims 24/48/96/48/24 with
two downsampling and two upsampling steps; same-scale skips are merged
through selective fusion. Inputs are reflect-padded to multiples of 16
(two factor-2 rescales plus slab divisibility at the coarsest scale) and
cropped back after the head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import truncnorm

from . import autodiff as ad
from .autodiff import Tensor, ShapeError
from .blocks import (MlpWeights, NormWeights, SkFusionWeights,
                     SnnBlockWeights, SK_REDUCTION, sk_fusion,
                     snn_block_forward)
from .lif import (DepthwiseWeights, LifParams, OlifBlockWeights,
                  PointwiseWeights)
from .nnops import conv2d, crop, downsample2x, pad_reflect, upsample2x

__all__ = ["ModelConfig", "DehazeSnnModel", "build", "forward",
           "count_params", "count_macs", "named_parameters",
           "infer_config", "MAC_CONVENTION", "PAD_MULTIPLE"]

PAD_MULTIPLE = 16
INIT_STD = 0.02

MAC_CONVENTION = (
    "MAC convention: conv = k^2*Cin*Cout*Hout*Wout, depthwise = k^2*C*H*W, "
    "pointwise = Cin*Cout*H*W, LIF update = 2 multiplies per element per "
    "group step; normalization, activations and comparisons excluded."
)

_VARIANTS = {
    "M": dict(depths=(8, 12, 16, 12, 8), dims=(24, 48, 96, 48, 24)),
    "L": dict(depths=(8, 16, 32, 16, 8), dims=(24, 48, 96, 48, 24)),
    "tiny": dict(depths=(1, 1, 1, 1, 1), dims=(8, 16, 32, 16, 8)),
}


@dataclass
class ModelConfig:
    depths: tuple[int, ...]
    dims: tuple[int, ...]
    mlp_ratio: int = 4
    g: int = 4
    drop_path_rate: float = 0.0
    variant: str = "custom"
    norm_enabled: bool = True

    def __post_init__(self):
        self.depths = tuple(int(d) for d in self.depths)
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.depths) != 5 or len(self.dims) != 5:
            raise ValueError("expected exactly five stage depths and dims")
        if any(d < 1 for d in self.depths):
            raise ValueError("stage depths must be positive")
        d = self.dims
        if d[0] != d[4] or d[1] != d[3] or d[2] != 2 * d[1] or d[1] != 2 * d[0]:
            raise ValueError("dims must follow the symmetric C/2C/4C ladder")
        if self.g < 1:
            raise ValueError("group count must be positive")
        if not (0.0 <= self.drop_path_rate < 1.0):
            raise ValueError("drop path rate must lie in [0, 1)")

    @classmethod
    def variant_config(cls, name: str, g: int = 4,
                       drop_path_rate: float = 0.0) -> "ModelConfig":
        if name not in _VARIANTS:
            raise ValueError(f"unknown variant {name!r}; "
                             f"choose from {sorted(_VARIANTS)}")
        spec = _VARIANTS[name]
        return cls(depths=spec["depths"], dims=spec["dims"], g=g,
                   drop_path_rate=drop_path_rate, variant=name)


@dataclass
class ConvWeights:
    kernel: Tensor
    bias: Tensor


@dataclass
class DehazeSnnModel:
    config: ModelConfig
    in_proj: ConvWeights
    stages: list  # five lists of SnnBlockWeights
    down1: ConvWeights
    down2: ConvWeights
    up1: PointwiseWeights
    up2: PointwiseWeights
    fuse_half: SkFusionWeights  # scale-1/2 skip (stage2 <-> stage4)
    fuse_full: SkFusionWeights  # scale-1 skip (stage1 <-> stage5)
    out_proj: ConvWeights


# --- initialization ---------------------------------------------------------

def _trunc_normal(rng: np.random.Generator, shape, std=INIT_STD):
    flat = truncnorm.rvs(-2.0, 2.0, scale=std, size=int(np.prod(shape)),
                         random_state=rng)
    return np.asarray(flat, dtype=np.float32).reshape(shape)


def _param(rng, shape, zero=False) -> Tensor:
    data = np.zeros(shape, dtype=np.float32) if zero else \
        _trunc_normal(rng, shape)
    return Tensor(data, requires_grad=True)


def _conv_weights(rng, cout, cin, k, zero=False) -> ConvWeights:
    return ConvWeights(kernel=_param(rng, (cout, cin, k, k), zero=zero),
                       bias=_param(rng, (cout,), zero=True))


def _pointwise_weights(rng, cout, cin, zero=False) -> PointwiseWeights:
    return PointwiseWeights(weight=_param(rng, (cout, cin), zero=zero),
                            bias=_param(rng, (cout,), zero=True))


def _norm_weights(c) -> NormWeights:
    return NormWeights(scale=Tensor(np.ones(c, dtype=np.float32),
                                    requires_grad=True),
                       shift=Tensor(np.zeros(c, dtype=np.float32),
                                    requires_grad=True))


def _olif_weights(rng, c) -> OlifBlockWeights:
    return OlifBlockWeights(
        dw=DepthwiseWeights(kernel=_param(rng, (c, 1, 3, 3)),
                            bias=_param(rng, (c,), zero=True)),
        w_h=_pointwise_weights(rng, c, c),
        w_v=_pointwise_weights(rng, c, c),
        merge=_pointwise_weights(rng, c, 2 * c),
        lif_h=LifParams.init(),
        lif_v=LifParams.init(),
    )


def _snn_block(rng, c, ratio, drop_path_rate) -> SnnBlockWeights:
    return SnnBlockWeights(
        norm1=_norm_weights(c),
        olif=_olif_weights(rng, c),
        norm2=_norm_weights(c),
        mlp=MlpWeights(fc1=_pointwise_weights(rng, ratio * c, c),
                       fc2=_pointwise_weights(rng, c, ratio * c)),
        drop_path_rate=drop_path_rate,
    )


def _sk_fusion_weights(rng, c) -> SkFusionWeights:
    hidden = max(c // SK_REDUCTION, 1)
    return SkFusionWeights(
        reduce=_pointwise_weights(rng, hidden, c),
        expand=_pointwise_weights(rng, 2 * c, hidden, zero=True),
    )


def build(config: ModelConfig, rng: np.random.Generator) -> DehazeSnnModel:
    """Initialize the full parameter tree; pure function of the rng state."""
    dims, depths = config.dims, config.depths
    stages = [[_snn_block(rng, dims[i], config.mlp_ratio,
                          config.drop_path_rate)
               for _ in range(depths[i])] for i in range(5)]
    return DehazeSnnModel(
        config=config,
        in_proj=_conv_weights(rng, dims[0], 3, 3),
        stages=stages,
        down1=_conv_weights(rng, dims[1], dims[0], 3),
        down2=_conv_weights(rng, dims[2], dims[1], 3),
        up1=_pointwise_weights(rng, 2 * dims[2], dims[2]),
        up2=_pointwise_weights(rng, 2 * dims[3], dims[3]),
        fuse_half=_sk_fusion_weights(rng, dims[3]),
        fuse_full=_sk_fusion_weights(rng, dims[4]),
        out_proj=_conv_weights(rng, 3, dims[4], 3),
    )


# --- parameter tree ---------------------------------------------------------

def _walk(obj, prefix, out):
    if isinstance(obj, Tensor):
        out.append((prefix, obj))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            _walk(item, f"{prefix}.{i}", out)
    elif hasattr(obj, "__dataclass_fields__"):
        for name in obj.__dataclass_fields__:
            if name in ("config", "drop_path_rate"):
                continue
            _walk(getattr(obj, name), f"{prefix}.{name}" if prefix else name,
                  out)


def named_parameters(model: DehazeSnnModel) -> list[tuple[str, Tensor]]:
    """Deterministic (dotted name, tensor) enumeration of learnable leaves."""
    out: list[tuple[str, Tensor]] = []
    _walk(model, "", out)
    return out


def count_params(model: DehazeSnnModel) -> int:
    return sum(t.data.size for _, t in named_parameters(model))


def infer_config(tensors: dict, g: int = 4) -> ModelConfig:
    """Reconstruct a ModelConfig from the tensor names/shapes of a
    checkpoint (the group count is not stored and must be supplied)."""
    try:
        d0 = tensors["in_proj.kernel"].shape[0]
        ratio = tensors["stages.0.0.mlp.fc1.weight"].shape[0] // d0
    except KeyError as e:
        raise ValueError(f"checkpoint is missing tensor {e}") from e
    depths = [0] * 5
    for name in tensors:
        if name.startswith("stages."):
            stage, block = name.split(".")[1:3]
            depths[int(stage)] = max(depths[int(stage)], int(block) + 1)
    dims = (d0, 2 * d0, 4 * d0, 2 * d0, d0)
    config = ModelConfig(depths=tuple(depths), dims=dims, mlp_ratio=ratio, g=g)
    for name, spec in _VARIANTS.items():
        if config.depths == spec["depths"] and config.dims == spec["dims"]:
            config.variant = name
    return config


# --- forward ----------------------------------------------------------------

def _run_stage(x, blocks, g, training, rng, norm_enabled):
    for block in blocks:
        x = snn_block_forward(x, block, g, training=training, rng=rng,
                              norm_enabled=norm_enabled)
    return x


def forward(model: DehazeSnnModel, image: Tensor, training: bool = False,
            rng: np.random.Generator | None = None) -> Tensor:
    """Full pass; output shape equals input shape, global residual added."""
    if image.data.ndim != 4 or image.data.shape[1] != 3:
        raise ShapeError("expected an (N, 3, H, W) image tensor")
    n, _, h, w = image.data.shape
    if h < 2 or w < 2:
        raise ShapeError("image degenerate after padding arithmetic")
    pad_h = (-h) % PAD_MULTIPLE
    pad_w = (-w) % PAD_MULTIPLE
    x = pad_reflect(image, pad_h, pad_w)
    cfg = model.config
    g, ne = cfg.g, cfg.norm_enabled

    f = conv2d(x, model.in_proj.kernel, model.in_proj.bias, padding=1)
    s1 = _run_stage(f, model.stages[0], g, training, rng, ne)
    d1 = downsample2x(s1, model.down1.kernel, model.down1.bias)
    s2 = _run_stage(d1, model.stages[1], g, training, rng, ne)
    d2 = downsample2x(s2, model.down2.kernel, model.down2.bias)
    s3 = _run_stage(d2, model.stages[2], g, training, rng, ne)
    u1 = upsample2x(s3, model.up1.weight, model.up1.bias)
    s4 = _run_stage(sk_fusion(u1, s2, model.fuse_half),
                    model.stages[3], g, training, rng, ne)
    u2 = upsample2x(s4, model.up2.weight, model.up2.bias)
    s5 = _run_stage(sk_fusion(u2, s1, model.fuse_full),
                    model.stages[4], g, training, rng, ne)
    head = conv2d(s5, model.out_proj.kernel, model.out_proj.bias, padding=1)
    return crop(head + x, h, w)


# --- cost accounting --------------------------------------------------------

def _block_macs(c, ratio, h, w):
    area = h * w
    dw = 9 * c * area
    scans = 2 * (c * c * area)       # shared projection, both branches
    lif = 2 * (2 * c * area)         # 2 multiplies/element, both branches
    merge = 2 * c * c * area
    mlp = 2 * ratio * c * c * area
    return dw + scans + lif + merge + mlp


def count_macs(model: DehazeSnnModel, input_hw: tuple[int, int]) -> int:
    """Analytic multiply-accumulate count at the given input resolution."""
    h, w = input_hw
    if h % PAD_MULTIPLE or w % PAD_MULTIPLE:
        raise ValueError(f"input extents must be multiples of {PAD_MULTIPLE}")
    cfg = model.config
    dims, depths, ratio = cfg.dims, cfg.depths, cfg.mlp_ratio
    res = [(h, w), (h // 2, w // 2), (h // 4, w // 4),
           (h // 2, w // 2), (h, w)]
    total = 9 * 3 * dims[0] * h * w                       # in_proj
    for i in range(5):
        hh, ww = res[i]
        total += depths[i] * _block_macs(dims[i], ratio, hh, ww)
    total += 9 * dims[0] * dims[1] * (h // 2) * (w // 2)  # down1
    total += 9 * dims[1] * dims[2] * (h // 4) * (w // 4)  # down2
    total += dims[2] * 2 * dims[2] * (h // 4) * (w // 4)  # up1 pointwise
    total += dims[3] * 2 * dims[3] * (h // 2) * (w // 2)  # up2 pointwise
    for c in (dims[3], dims[4]):                          # skip fusions
        hidden = max(c // SK_REDUCTION, 1)
        total += c * hidden + hidden * 2 * c
    total += 9 * dims[4] * 3 * h * w                      # out_proj
    return int(total)
