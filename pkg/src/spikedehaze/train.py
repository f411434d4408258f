"""Training and evaluation loops with deterministic, resumable trajectories.

All per-step randomness (batch sampling, crops, flips, drop path) is drawn
from a generator seeded by (run seed, step index), so a run resumed from a
checkpoint at step k replays exactly the same trajectory as an
uninterrupted run.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .data import PairedDataset, load_batch
from .losses import LossConfig, combined_loss
from .metrics import psnr, ssim
from .model import DehazeSnnModel, forward, named_parameters
from .optim import (LR_LIF, LR_MAIN, OptimState, Schedule, adamw_step,
                    cosine_lr)

__all__ = ["TrainConfig", "TrainingError", "train", "evaluate",
           "model_state", "load_model_state", "save_model_checkpoint",
           "load_model_checkpoint"]


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 1000
    batch_size: int = 4
    lr_main: float = LR_MAIN
    lr_lif: float = LR_LIF
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    eval_every: int = 0  # 0 disables periodic eval/checkpoints
    checkpoint_dir: str | None = None
    loss: LossConfig = field(default_factory=LossConfig)


# --- checkpoint plumbing ----------------------------------------------------

def model_state(model: DehazeSnnModel) -> dict[str, np.ndarray]:
    return {name: t.data for name, t in named_parameters(model)}


def load_model_state(model: DehazeSnnModel, tensors: dict[str, np.ndarray]):
    params = named_parameters(model)
    missing = [n for n, _ in params if n not in tensors]
    extra = sorted(set(tensors) - {n for n, _ in params})
    if missing or extra:
        raise TrainingError(
            f"checkpoint does not match model (missing {missing[:3]}, "
            f"unexpected {extra[:3]})")
    for name, t in params:
        arr = tensors[name]
        if tuple(arr.shape) != t.data.shape:
            raise TrainingError(f"shape mismatch for {name}")
        t.data = arr.astype(np.float32).copy()


def save_model_checkpoint(path, model: DehazeSnnModel,
                          opt_state: OptimState | None = None):
    records = None if opt_state is None else opt_state.to_records()
    save_checkpoint(path, model_state(model), records)


def load_model_checkpoint(path, model: DehazeSnnModel) -> OptimState | None:
    tensors, opt_records = load_checkpoint(path)
    load_model_state(model, tensors)
    return None if opt_records is None else OptimState.from_records(opt_records)


# --- loops ------------------------------------------------------------------

def _zero_grads(params):
    for _, t in params:
        t.zero_grad()


def _batch_loss(model, hazy, gt, loss_config, training, rng):
    pred = forward(model, Tensor(hazy), training=training, rng=rng)
    if not np.all(np.isfinite(pred.data)):
        raise TrainingError("non-finite tensor: model output")
    loss = combined_loss(pred, Tensor(gt), loss_config)
    if not np.isfinite(loss.data):
        raise TrainingError("non-finite tensor: loss")
    return loss


def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step])


def train(model: DehazeSnnModel, dataset: PairedDataset, config: TrainConfig,
          eval_dataset: PairedDataset | None = None,
          log_path: str | None = None,
          resume_from: str | None = None) -> list[dict]:
    """Run the training loop; returns the metrics log (also written as
    newline-delimited JSON when ``log_path`` is given)."""
    if len(dataset) == 0:
        raise TrainingError("empty dataset")
    params = named_parameters(model)
    opt_state = OptimState(weight_decay_main=config.weight_decay)
    if resume_from is not None:
        resumed = load_model_checkpoint(resume_from, model)
        if resumed is None:
            raise TrainingError("checkpoint has no optimizer state to resume")
        resumed.weight_decay_main = config.weight_decay
        opt_state = resumed
    opt_state.beta1 = config.beta1
    opt_state.beta2 = config.beta2
    start = opt_state.t
    sched_main = Schedule(config.lr_main, config.steps)
    sched_lif = Schedule(config.lr_lif, config.steps)
    ckpt_dir = config.checkpoint_dir
    if ckpt_dir:
        os.makedirs(ckpt_dir, exist_ok=True)
    log: list[dict] = []
    log_file = open(log_path, "a") if log_path else None
    try:
        for step in range(start, config.steps):
            rng = _step_rng(config.seed, step)
            indices = rng.integers(0, len(dataset), size=config.batch_size)
            hazy, gt = load_batch(dataset, indices, rng)
            ad.clear_tape()
            _zero_grads(params)
            loss = _batch_loss(model, hazy, gt, config.loss, True, rng)
            ad.backward(loss)
            lr_main = cosine_lr(step, sched_main)
            lr_lif = cosine_lr(step, sched_lif)
            adamw_step(params, opt_state, lr_main, lr_lif)
            entry = {"step": step, "loss": loss.item(),
                     "lr_main": lr_main, "lr_lif": lr_lif,
                     "psnr": None, "ssim": None}
            do_eval = config.eval_every and (step + 1) % config.eval_every == 0
            if do_eval and eval_dataset is not None:
                scores = evaluate(model, eval_dataset)
                entry["psnr"] = scores["mean_psnr"]
                entry["ssim"] = scores["mean_ssim"]
            if do_eval and ckpt_dir:
                save_model_checkpoint(
                    os.path.join(ckpt_dir, f"step_{step + 1:06d}.ckpt"),
                    model, opt_state)
            log.append(entry)
            if log_file:
                log_file.write(json.dumps(entry) + "\n")
        # terminal entry: loss after the final update, no weight change
        rng = _step_rng(config.seed, config.steps)
        indices = rng.integers(0, len(dataset), size=config.batch_size)
        hazy, gt = load_batch(dataset, indices, rng)
        ad.clear_tape()
        with ad.no_grad():
            loss = _batch_loss(model, hazy, gt, config.loss, False, rng)
        entry = {"step": config.steps, "loss": loss.item(),
                 "lr_main": cosine_lr(config.steps, sched_main),
                 "lr_lif": cosine_lr(config.steps, sched_lif),
                 "psnr": None, "ssim": None}
        if eval_dataset is not None:
            scores = evaluate(model, eval_dataset)
            entry["psnr"] = scores["mean_psnr"]
            entry["ssim"] = scores["mean_ssim"]
        log.append(entry)
        if log_file:
            log_file.write(json.dumps(entry) + "\n")
        if ckpt_dir:
            save_model_checkpoint(os.path.join(ckpt_dir, "final.ckpt"),
                                  model, opt_state)
    finally:
        if log_file:
            log_file.close()
        ad.clear_tape()
    return log


def evaluate(model: DehazeSnnModel, dataset: PairedDataset) -> dict:
    """Full-image eval-mode inference; per-image and mean PSNR/SSIM.

    PSNR is scored jointly over RGB; SSIM on the channel-mean grayscale.
    """
    per_image = []
    for index in range(len(dataset)):
        hazy, gt = dataset.load_pair(index)
        with ad.no_grad():
            pred = forward(model, Tensor(hazy[None]))
        out = np.clip(pred.data[0], 0.0, 1.0)
        per_image.append({
            "stem": os.path.splitext(
                os.path.basename(dataset.pairs[index][0]))[0],
            "psnr": psnr(out, gt),
            "ssim": ssim(out, gt),
        })
    return {
        "per_image": per_image,
        "mean_psnr": float(np.mean([r["psnr"] for r in per_image])),
        "mean_ssim": float(np.mean([r["ssim"] for r in per_image])),
    }
