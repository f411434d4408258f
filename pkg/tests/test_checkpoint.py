import struct

import numpy as np
import pytest

from spikedehaze.checkpoint import (MAGIC, VERSION, CheckpointError,
                                    load_checkpoint, save_checkpoint)
from spikedehaze.model import named_parameters
from spikedehaze.train import (load_model_checkpoint, model_state,
                               save_model_checkpoint)


def _tensors(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "a.weight": rng.standard_normal((3, 4)).astype(np.float32),
        "a.bias": rng.standard_normal(3).astype(np.float32),
        "scalar": np.asarray(0.25, dtype=np.float32),
    }


class TestRoundTrip:
    def test_values_and_shapes(self, tmp_path):
        path = tmp_path / "t.ckpt"
        tensors = _tensors()
        save_checkpoint(path, tensors)
        back, opt = load_checkpoint(path)
        assert opt is None
        assert set(back) == set(tensors)
        for name in tensors:
            np.testing.assert_array_equal(back[name], tensors[name])
            assert back[name].shape == tensors[name].shape

    def test_save_load_save_is_byte_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, _tensors())
        back, _ = load_checkpoint(p1)
        save_checkpoint(p2, back)
        assert p1.read_bytes() == p2.read_bytes()

    def test_optimizer_section_round_trip(self, tmp_path):
        path = tmp_path / "t.ckpt"
        opt = {"t": np.asarray([3.0], dtype=np.float32),
               "m.a.weight": np.ones((3, 4), dtype=np.float32)}
        save_checkpoint(path, _tensors(), opt)
        back, opt_back = load_checkpoint(path)
        assert set(opt_back) == set(opt)
        np.testing.assert_array_equal(opt_back["m.a.weight"],
                                      opt["m.a.weight"])

    def test_header_layout(self, tmp_path):
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, _tensors())
        blob = path.read_bytes()
        assert blob[:4] == MAGIC
        version, count = struct.unpack_from("<II", blob, 4)
        assert version == VERSION
        assert count == 3


class TestErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "t.ckpt"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, _tensors())
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "t.ckpt"
        path.write_bytes(MAGIC + struct.pack("<II", 99, 0))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)


class TestModelCheckpoint:
    def test_model_round_trip_bit_identical(self, tmp_path, tiny_model):
        path = tmp_path / "m.ckpt"
        save_model_checkpoint(path, tiny_model)
        before = {n: t.data.copy() for n, t in named_parameters(tiny_model)}
        for _, t in named_parameters(tiny_model):
            t.data = t.data + 1.0  # perturb, then restore
        load_model_checkpoint(path, tiny_model)
        for name, t in named_parameters(tiny_model):
            np.testing.assert_array_equal(t.data, before[name])

    def test_mismatched_model_rejected(self, tmp_path, tiny_model):
        from spikedehaze.train import TrainingError
        path = tmp_path / "m.ckpt"
        state = model_state(tiny_model)
        state.pop("in_proj.kernel")
        from spikedehaze.checkpoint import save_checkpoint as raw_save
        raw_save(path, state)
        with pytest.raises(TrainingError):
            load_model_checkpoint(path, tiny_model)
