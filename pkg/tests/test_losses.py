import numpy as np
import pytest

from spikedehaze import autodiff as ad
from spikedehaze.autodiff import ShapeError, Tensor
from spikedehaze.losses import (LossConfig, PerceptualProxy, combined_loss,
                                l1_loss)


def _pair(seed=0, shape=(1, 3, 16, 16)):
    rng = np.random.default_rng(seed)
    a = rng.random(shape).astype(np.float32)
    b = np.clip(a + 0.1 * rng.standard_normal(shape), 0, 1).astype(np.float32)
    return Tensor(a), Tensor(b)


class TestL1:
    def test_zero_at_identity(self):
        a, _ = _pair()
        assert l1_loss(a, a).item() == 0.0

    def test_constant_offset(self):
        a, _ = _pair(1)
        b = Tensor(a.data + 0.1)
        assert l1_loss(b, a).item() == pytest.approx(0.1, abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l1_loss(Tensor(np.zeros((1, 3, 4, 4))),
                    Tensor(np.zeros((1, 3, 4, 5))))

    def test_gradient_is_sign_over_n(self):
        rng = np.random.default_rng(2)
        pred = Tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True)
        target = Tensor(np.zeros((2, 3, 4, 4)))
        ad.backward(l1_loss(pred, target))
        np.testing.assert_allclose(pred.grad,
                                   np.sign(pred.data) / pred.data.size,
                                   atol=1e-12)


class TestPerceptualProxy:
    def test_zero_at_identity(self):
        a, _ = _pair(3)
        proxy = PerceptualProxy(0)
        assert proxy.distance(a, a).item() == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative_and_symmetric(self):
        a, b = _pair(4)
        proxy = PerceptualProxy(0)
        d_ab = proxy.distance(a, b).item()
        d_ba = proxy.distance(b, a).item()
        assert d_ab >= 0.0
        assert d_ab == pytest.approx(d_ba, rel=1e-6)

    def test_seeded_weights_deterministic(self):
        pa = PerceptualProxy(7)
        pb = PerceptualProxy(7)
        for ka, kb in zip(pa.layers, pb.layers):
            np.testing.assert_array_equal(ka.data, kb.data)

    def test_handles_odd_extents(self):
        a, b = _pair(5, shape=(1, 3, 17, 21))
        d = PerceptualProxy(0).distance(a, b).item()
        assert np.isfinite(d) and d > 0


class TestCombinedLoss:
    def test_alpha_one_equals_l1(self):
        a, b = _pair(6)
        cfg = LossConfig(alpha1=1.0)
        assert combined_loss(a, b, cfg).item() == \
            pytest.approx(l1_loss(a, b).item(), abs=1e-12)

    def test_perceptual_none_scales_l1(self):
        a, b = _pair(7)
        cfg = LossConfig(alpha1=0.3, perceptual="none")
        assert combined_loss(a, b, cfg).item() == \
            pytest.approx(0.3 * l1_loss(a, b).item(), rel=1e-6)

    @pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
    def test_zero_at_identity_for_all_alpha(self, alpha):
        a, _ = _pair(8)
        cfg = LossConfig(alpha1=alpha)
        assert combined_loss(a, a, cfg).item() == \
            pytest.approx(0.0, abs=1e-10)

    def test_default_alpha_is_half(self):
        assert LossConfig().alpha1 == 0.5

    def test_invalid_alpha_rejected(self):
        with pytest.raises(ValueError):
            LossConfig(alpha1=1.5)

    def test_invalid_selector_rejected(self):
        with pytest.raises(ValueError):
            LossConfig(perceptual="lpips")

    def test_gradient_flows_through_both_terms(self):
        rng = np.random.default_rng(9)
        pred = Tensor(rng.random((1, 3, 16, 16)).astype(np.float32),
                      requires_grad=True)
        target = Tensor(rng.random((1, 3, 16, 16)).astype(np.float32))
        ad.backward(combined_loss(pred, target, LossConfig()))
        assert pred.grad is not None
        assert np.any(pred.grad != 0.0)
