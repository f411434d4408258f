"""Paired image dataset, synthetic haze generation, and batch loading.

Dataset layout: ``<root>/hazy/<stem>.png`` and ``<root>/gt/<stem>.png``,
8-bit RGB PNG, stems matched exactly. Pixel values are scaled to [0, 1].
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

__all__ = ["DatasetError", "PairedDataset", "synthesize_haze",
           "load_batch", "read_image", "write_image", "smooth_field"]

DEFAULT_PATCH = 256


class DatasetError(RuntimeError):
    pass


def read_image(path) -> np.ndarray:
    """Load an 8-bit RGB PNG as float32 (3, H, W) in [0, 1]."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as e:
        raise DatasetError(f"cannot read image {path}: {e}") from e
    return arr.transpose(2, 0, 1)


def write_image(path, img: np.ndarray):
    """Write a float (3, H, W) image in [0, 1] as 8-bit RGB PNG."""
    arr = np.clip(np.asarray(img) * 255.0, 0.0, 255.0)
    arr = np.rint(arr).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path)


def smooth_field(shape, rng: np.random.Generator, scale: int = 8) -> np.ndarray:
    """Smooth random field in [0, 1]: coarse noise, bilinearly upsampled."""
    h, w = shape
    ch, cw = max(h // scale, 2), max(w // scale, 2)
    coarse = rng.random((ch, cw))
    ys = np.linspace(0, ch - 1, h)
    xs = np.linspace(0, cw - 1, w)
    y0 = np.floor(ys).astype(int).clip(0, ch - 2)
    x0 = np.floor(xs).astype(int).clip(0, cw - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    c00 = coarse[np.ix_(y0, x0)]
    c01 = coarse[np.ix_(y0, x0 + 1)]
    c10 = coarse[np.ix_(y0 + 1, x0)]
    c11 = coarse[np.ix_(y0 + 1, x0 + 1)]
    return (c00 * (1 - fy) * (1 - fx) + c01 * (1 - fy) * fx +
            c10 * fy * (1 - fx) + c11 * fy * fx)


def synthesize_haze(clean: np.ndarray, t: float, airlight: float,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Atmospheric-scattering haze: I = J*t + A*(1 - t), per pixel.

    With an rng the transmission becomes a smooth random field centered on
    ``t`` (clipped to (0, 1]); without one it is spatially constant.
    """
    if not (0.0 < t <= 1.0):
        raise ValueError("transmission must lie in (0, 1]")
    if not (0.0 <= airlight <= 1.0):
        raise ValueError("airlight must lie in [0, 1]")
    c, h, w = clean.shape
    if rng is None:
        t_map = np.full((1, h, w), t, dtype=clean.dtype)
    else:
        jitter = 0.2 * (smooth_field((h, w), rng) - 0.5)
        t_map = np.clip(t + jitter, 1e-3, 1.0)[None].astype(clean.dtype)
    return clean * t_map + airlight * (1.0 - t_map)


@dataclass
class PairedDataset:
    root: str
    patch_size: int = DEFAULT_PATCH
    augment_flip: bool = True
    pairs: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        hazy_dir = os.path.join(self.root, "hazy")
        gt_dir = os.path.join(self.root, "gt")
        if not os.path.isdir(hazy_dir) or not os.path.isdir(gt_dir):
            raise DatasetError(
                f"dataset root {self.root} must contain hazy/ and gt/")
        hazy = {os.path.splitext(f)[0]: os.path.join(hazy_dir, f)
                for f in sorted(os.listdir(hazy_dir)) if f.endswith(".png")}
        gt = {os.path.splitext(f)[0]: os.path.join(gt_dir, f)
              for f in sorted(os.listdir(gt_dir)) if f.endswith(".png")}
        unmatched = sorted(set(hazy) ^ set(gt))
        if unmatched:
            raise DatasetError(f"unpaired stems: {', '.join(unmatched)}")
        if not hazy:
            raise DatasetError(f"no PNG pairs under {self.root}")
        self.pairs = [(hazy[stem], gt[stem]) for stem in sorted(hazy)]

    def __len__(self):
        return len(self.pairs)

    def load_pair(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        hazy_path, gt_path = self.pairs[index]
        hazy = read_image(hazy_path)
        gt = read_image(gt_path)
        if hazy.shape != gt.shape:
            raise DatasetError(
                f"pair dimension mismatch for {os.path.basename(hazy_path)}")
        return hazy, gt


def _pad_to_patch(img: np.ndarray, patch: int) -> np.ndarray:
    c, h, w = img.shape
    ph, pw = max(patch - h, 0), max(patch - w, 0)
    if ph == 0 and pw == 0:
        return img
    return np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="reflect")


def load_batch(dataset: PairedDataset, indices,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Crop and (optionally) flip each pair identically; returns float32
    (B, 3, patch, patch) hazy and ground-truth arrays."""
    patch = dataset.patch_size
    hazy_out, gt_out = [], []
    for index in indices:
        hazy, gt = dataset.load_pair(int(index))
        hazy = _pad_to_patch(hazy, patch)
        gt = _pad_to_patch(gt, patch)
        _, h, w = hazy.shape
        top = int(rng.integers(0, h - patch + 1))
        left = int(rng.integers(0, w - patch + 1))
        hazy = hazy[:, top:top + patch, left:left + patch]
        gt = gt[:, top:top + patch, left:left + patch]
        if dataset.augment_flip and rng.random() < 0.5:
            hazy = hazy[:, :, ::-1]
            gt = gt[:, :, ::-1]
        hazy_out.append(np.ascontiguousarray(hazy, dtype=np.float32))
        gt_out.append(np.ascontiguousarray(gt, dtype=np.float32))
    return np.stack(hazy_out), np.stack(gt_out)
