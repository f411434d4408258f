import numpy as np
import pytest

from spikedehaze import autodiff as ad
from spikedehaze.autodiff import ShapeError, Tensor
from spikedehaze.model import (DehazeSnnModel, ModelConfig, build,
                               count_macs, count_params, forward,
                               infer_config, named_parameters)


class TestModelConfig:
    @pytest.mark.parametrize("name,depths", [
        ("M", (8, 12, 16, 12, 8)),
        ("L", (8, 16, 32, 16, 8)),
        ("tiny", (1, 1, 1, 1, 1)),
    ])
    def test_variants(self, name, depths):
        cfg = ModelConfig.variant_config(name)
        assert cfg.depths == depths
        assert cfg.g == 4 and cfg.mlp_ratio == 4

    def test_standard_dims(self):
        assert ModelConfig.variant_config("M").dims == (24, 48, 96, 48, 24)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            ModelConfig.variant_config("XL")

    @pytest.mark.parametrize("dims", [
        (24, 48, 96, 48, 12),    # asymmetric
        (24, 48, 64, 48, 24),    # middle not 4x
        (24, 40, 80, 40, 24),    # second not 2x
    ])
    def test_asymmetric_dims_rejected(self, dims):
        with pytest.raises(ValueError):
            ModelConfig(depths=(1, 1, 1, 1, 1), dims=dims)

    def test_nonpositive_depth_rejected(self):
        with pytest.raises(ValueError):
            ModelConfig(depths=(1, 0, 1, 1, 1), dims=(8, 16, 32, 16, 8))

    def test_wrong_arity_rejected(self):
        with pytest.raises(ValueError):
            ModelConfig(depths=(1, 1, 1), dims=(8, 16, 32, 16, 8))


class TestBuild:
    def test_seeded_determinism(self):
        cfg = ModelConfig.variant_config("tiny")
        a = build(cfg, np.random.default_rng(3))
        b = build(cfg, np.random.default_rng(3))
        for (na, ta), (nb, tb) in zip(named_parameters(a),
                                      named_parameters(b)):
            assert na == nb
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_lif_init_values(self, tiny_model):
        params = dict(named_parameters(tiny_model))
        tau = params["stages.0.0.olif.lif_h.tau"]
        vth = params["stages.2.0.olif.lif_v.v_th"]
        assert tau.data == pytest.approx(0.25)
        assert vth.data == pytest.approx(0.25)

    def test_biases_zero_and_fusion_expand_zero(self, tiny_model):
        params = dict(named_parameters(tiny_model))
        np.testing.assert_array_equal(params["in_proj.bias"].data, 0.0)
        np.testing.assert_array_equal(params["fuse_full.expand.weight"].data,
                                      0.0)

    def test_unique_dotted_names(self, tiny_model):
        names = [n for n, _ in named_parameters(tiny_model)]
        assert len(names) == len(set(names))

    def test_truncated_init_bounded(self, tiny_model):
        params = dict(named_parameters(tiny_model))
        k = params["in_proj.kernel"].data
        assert np.all(np.abs(k) <= 2 * 0.02 + 1e-7)


class TestForward:
    def test_shape_contract_64(self, tiny_model):
        x = Tensor(np.random.default_rng(0).random((1, 3, 64, 64))
                   .astype(np.float32))
        with ad.no_grad():
            out = forward(tiny_model, x)
        assert out.shape == (1, 3, 64, 64)

    def test_non_multiple_extents_padded_and_cropped(self, tiny_model):
        # 100x80 pads internally to 112x80 and crops back
        x = Tensor(np.random.default_rng(1).random((1, 3, 100, 80))
                   .astype(np.float32))
        with ad.no_grad():
            out = forward(tiny_model, x)
        assert out.shape == (1, 3, 100, 80)

    def test_zeroed_head_is_identity(self, tiny_model):
        tiny_model.out_proj.kernel.data[...] = 0.0
        tiny_model.out_proj.bias.data[...] = 0.0
        x = Tensor(np.random.default_rng(2).random((1, 3, 64, 64))
                   .astype(np.float32))
        with ad.no_grad():
            out = forward(tiny_model, x)
        np.testing.assert_array_equal(out.data, x.data)

    def test_wrong_channel_count_rejected(self, tiny_model):
        with pytest.raises(ShapeError):
            forward(tiny_model, Tensor(np.zeros((1, 4, 64, 64))))


class TestCostAccounting:
    def test_single_conv_param_formula(self):
        # 3x3 conv 3->24 with bias: 3*24*9 + 24
        assert 3 * 24 * 9 + 24 == 672

    def test_tiny_closed_form(self, tiny_model):
        # layer-by-layer sum for depths (1,)*5, dims (8,16,32,16,8), ratio 4
        def block(c):
            norms = 2 * 2 * c
            # tau and v_th for each of the two scan branches: 4 scalars
            olif = (9 * c + c) + 2 * (c * c + c) + (2 * c * c + c) + 4
            mlp = (4 * c * c + 4 * c) + (4 * c * c + c)
            return norms + olif + mlp
        expected = (3 * 8 * 9 + 8) + (8 * 3 * 9 + 3)          # in/out proj
        expected += 8 * 16 * 9 + 16                            # down1
        expected += 16 * 32 * 9 + 32                           # down2
        expected += 32 * 64 + 64                               # up1
        expected += 16 * 32 + 32                               # up2
        for c in (8, 16, 32, 16, 8):
            expected += block(c)
        for c in (16, 8):                                      # fusions
            hidden = max(c // 8, 1)
            expected += (c * hidden + hidden) + (hidden * 2 * c + 2 * c)
        assert count_params(tiny_model) == expected == 30826

    def test_count_matches_independent_tree_walk(self, tiny_model):
        total = 0
        stack = [tiny_model]
        seen = set()
        while stack:
            obj = stack.pop()
            if id(obj) in seen:
                continue
            seen.add(id(obj))
            if isinstance(obj, Tensor):
                total += obj.data.size
            elif isinstance(obj, (list, tuple)):
                stack.extend(obj)
            elif hasattr(obj, "__dataclass_fields__"):
                for name in obj.__dataclass_fields__:
                    if name in ("config", "drop_path_rate"):
                        continue
                    stack.append(getattr(obj, name))
        assert count_params(tiny_model) == total

    def test_mac_closed_form_products(self):
        assert 9 * 3 * 24 * 256 * 256 == 42_467_328
        assert 24 * 24 * 256 * 256 == 37_748_736

    def test_macs_scale_with_area(self, tiny_model):
        small = count_macs(tiny_model, (64, 64))
        large = count_macs(tiny_model, (128, 128))
        # fusion perceptrons are resolution independent, everything else is
        # linear in area
        cfg = tiny_model.config
        fixed = sum(c * max(c // 8, 1) + max(c // 8, 1) * 2 * c
                    for c in (cfg.dims[3], cfg.dims[4]))
        assert large - fixed == 4 * (small - fixed)

    def test_macs_reject_non_multiple(self, tiny_model):
        with pytest.raises(ValueError):
            count_macs(tiny_model, (60, 64))


class TestInferConfig:
    def test_round_trip_from_shapes(self, tiny_model):
        tensors = {n: t.data for n, t in named_parameters(tiny_model)}
        cfg = infer_config(tensors, g=4)
        assert cfg.depths == tiny_model.config.depths
        assert cfg.dims == tiny_model.config.dims
        assert cfg.variant == "tiny"

    def test_missing_tensor_rejected(self):
        with pytest.raises(ValueError):
            infer_config({"stages.0.0.mlp.fc1.weight": np.zeros((32, 8))})
