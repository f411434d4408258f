import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from spikedehaze import ModelConfig, build
from spikedehaze.data import synthesize_haze, write_image


@pytest.fixture(autouse=True)
def _fresh_tape():
    from spikedehaze import autodiff as ad
    ad.clear_tape()
    yield
    ad.clear_tape()


@pytest.fixture
def tiny_model():
    return build(ModelConfig.variant_config("tiny"), np.random.default_rng(0))


def make_synthetic_dataset(root, n_pairs=4, size=64, t=0.9, airlight=0.8,
                           seed=0):
    """Write n_pairs of mildly hazed smooth random images under root."""
    os.makedirs(os.path.join(root, "hazy"), exist_ok=True)
    os.makedirs(os.path.join(root, "gt"), exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_pairs):
        base = rng.random((3, 1, 1)) * np.ones((3, size, size))
        ramp = np.linspace(0, 1, size)
        clean = 0.5 * base + 0.25 * ramp[None, None, :] + \
            0.25 * rng.random((3, size, size)) * 0.2
        clean = np.clip(clean, 0.0, 1.0).astype(np.float32)
        hazy = synthesize_haze(clean, t, airlight)
        write_image(os.path.join(root, "gt", f"img{i:02d}.png"), clean)
        write_image(os.path.join(root, "hazy", f"img{i:02d}.png"), hazy)
    return root
