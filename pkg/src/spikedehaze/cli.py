"""Command-line entry point: train / infer / eval / cost / gradcheck / synth.

Exit codes: 0 success, 1 usage or validation failure, 2 runtime failure.
Every command validates its inputs before any heavy computation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np
import yaml

from .checkpoint import CheckpointError
from .data import (DatasetError, PairedDataset, read_image, synthesize_haze,
                   write_image)
from .gradcheck import run_suite
from .losses import LossConfig
from .model import (MAC_CONVENTION, ModelConfig, build, count_macs,
                    count_params, forward, infer_config, named_parameters)
from .optim import LR_LIF, LR_MAIN
from .train import (TrainConfig, TrainingError, evaluate,
                    load_model_checkpoint, save_model_checkpoint, train)
from . import autodiff as ad
from .autodiff import Tensor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class ConfigError(ValueError):
    pass


# --- run configuration ------------------------------------------------------

_SCHEMA = {
    "model": {"variant": str, "g": int, "drop_path": float},
    "data": {"train_dir": str, "val_dir": str, "patch_size": int},
    "optim": {"lr_main": float, "lr_lif": float, "beta1": float,
              "beta2": float, "weight_decay": float, "steps": int,
              "batch_size": int},
    "loss": {"alpha1": float, "perceptual": str, "proxy_seed": int},
    "run": {"seed": int, "checkpoint_dir": str, "eval_every": int},
}

_DEFAULTS = {
    "model": {"variant": "M", "g": 4, "drop_path": 0.0},
    "data": {"train_dir": None, "val_dir": None, "patch_size": 256},
    "optim": {"lr_main": LR_MAIN, "lr_lif": LR_LIF, "beta1": 0.9,
              "beta2": 0.999, "weight_decay": 0.01, "steps": 1000,
              "batch_size": 5},
    "loss": {"alpha1": 0.5, "perceptual": "proxy", "proxy_seed": 0},
    "run": {"seed": 0, "checkpoint_dir": "checkpoints", "eval_every": 0},
}


def load_run_config(path) -> dict:
    try:
        with open(path) as f:
            raw = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config parse error in {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping of sections")
    config = {sec: dict(defaults) for sec, defaults in _DEFAULTS.items()}
    for section, values in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key, value in values.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            want = _SCHEMA[section][key]
            if want is float and isinstance(value, int):
                value = float(value)
            if not isinstance(value, want):
                raise ConfigError(
                    f"config key {section}.{key} must be {want.__name__}")
            config[section][key] = value
    _validate_run_config(config)
    return config


def _validate_run_config(config: dict):
    if not (0.0 <= config["loss"]["alpha1"] <= 1.0):
        raise ConfigError("loss.alpha1 must lie in [0, 1]")
    if config["loss"]["perceptual"] not in ("proxy", "none"):
        raise ConfigError("loss.perceptual must be 'proxy' or 'none'")
    if config["model"]["variant"] not in ("M", "L", "tiny"):
        raise ConfigError("model.variant must be one of M, L, tiny")
    if not (0.0 <= config["model"]["drop_path"] < 1.0):
        raise ConfigError("model.drop_path must lie in [0, 1)")
    if config["optim"]["steps"] < 1 or config["optim"]["batch_size"] < 1:
        raise ConfigError("optim.steps and optim.batch_size must be positive")
    if config["data"]["train_dir"] is None:
        raise ConfigError("data.train_dir is required")
    if config["data"]["patch_size"] % 16:
        raise ConfigError("data.patch_size must be a multiple of 16")


# --- commands ---------------------------------------------------------------

def cmd_train(args) -> int:
    config = load_run_config(args.config)
    train_dir = config["data"]["train_dir"]
    if not os.path.isdir(train_dir):
        raise ConfigError(f"data.train_dir does not exist: {train_dir}")
    dataset = PairedDataset(train_dir,
                            patch_size=config["data"]["patch_size"])
    val_dir = config["data"]["val_dir"]
    eval_dataset = None
    if val_dir:
        if not os.path.isdir(val_dir):
            raise ConfigError(f"data.val_dir does not exist: {val_dir}")
        eval_dataset = PairedDataset(val_dir)
    model_config = ModelConfig.variant_config(
        config["model"]["variant"], g=config["model"]["g"],
        drop_path_rate=config["model"]["drop_path"])
    rng = np.random.default_rng(config["run"]["seed"])
    model = build(model_config, rng)
    tc = TrainConfig(
        steps=config["optim"]["steps"],
        batch_size=config["optim"]["batch_size"],
        lr_main=config["optim"]["lr_main"],
        lr_lif=config["optim"]["lr_lif"],
        weight_decay=config["optim"]["weight_decay"],
        beta1=config["optim"]["beta1"],
        beta2=config["optim"]["beta2"],
        seed=config["run"]["seed"],
        eval_every=config["run"]["eval_every"],
        checkpoint_dir=config["run"]["checkpoint_dir"],
        loss=LossConfig(alpha1=config["loss"]["alpha1"],
                        perceptual=config["loss"]["perceptual"],
                        proxy_seed=config["loss"]["proxy_seed"]),
    )
    os.makedirs(tc.checkpoint_dir, exist_ok=True)
    log_path = os.path.join(tc.checkpoint_dir, "metrics.jsonl")
    log = train(model, dataset, tc, eval_dataset=eval_dataset,
                log_path=log_path, resume_from=args.resume)
    print(f"trained {tc.steps} steps; final loss {log[-1]['loss']:.6f}; "
          f"checkpoints in {tc.checkpoint_dir}")
    return EXIT_OK


def _load_model_for(checkpoint_path, g):
    from .checkpoint import load_checkpoint
    tensors, _ = load_checkpoint(checkpoint_path)
    config = infer_config(tensors, g=g)
    model = build(config, np.random.default_rng(0))
    load_model_checkpoint(checkpoint_path, model)
    return model


def cmd_infer(args) -> int:
    if not os.path.isfile(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    if not os.path.isfile(args.input):
        raise ConfigError(f"input image not found: {args.input}")
    model = _load_model_for(args.checkpoint, args.g)
    img = read_image(args.input)
    with ad.no_grad():
        pred = forward(model, Tensor(img[None]))
    write_image(args.output, np.clip(pred.data[0], 0.0, 1.0))
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if not os.path.isfile(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    if not os.path.isdir(args.data_dir):
        raise ConfigError(f"data dir not found: {args.data_dir}")
    model = _load_model_for(args.checkpoint, args.g)
    dataset = PairedDataset(args.data_dir)
    scores = evaluate(model, dataset)
    print(f"{'image':<24} {'PSNR':>8} {'SSIM':>8}")
    for row in scores["per_image"]:
        print(f"{row['stem']:<24} {row['psnr']:>8.3f} {row['ssim']:>8.4f}")
    print(f"{'mean':<24} {scores['mean_psnr']:>8.3f} "
          f"{scores['mean_ssim']:>8.4f}")
    print("note: PSNR scored jointly over RGB; SSIM on channel-mean gray")
    print(json.dumps({"mean_psnr": scores["mean_psnr"],
                      "mean_ssim": scores["mean_ssim"],
                      "images": len(scores["per_image"])}))
    return EXIT_OK


def cmd_cost(args) -> int:
    if args.height % 16 or args.width % 16:
        raise ConfigError("height and width must be multiples of 16")
    config = ModelConfig.variant_config(args.variant)
    model = build(config, np.random.default_rng(0))
    params = count_params(model)
    macs = count_macs(model, (args.height, args.width))
    print(f"variant {args.variant} at {args.height}x{args.width}")
    print(f"parameters: {params}")
    print(f"macs: {macs}")
    print(MAC_CONVENTION)
    print(json.dumps({"variant": args.variant, "params": params,
                      "macs": macs}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    start = time.time()
    results = run_suite()
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{status}  {r.name:<28} worst rel err {r.max_error:.3e}  "
              f"(tol {r.tolerance:.0e})")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed "
          f"in {time.time() - start:.1f}s")
    return EXIT_OK if not failed else EXIT_RUNTIME


def cmd_synth(args) -> int:
    if not os.path.isdir(args.clean_dir):
        raise ConfigError(f"clean dir not found: {args.clean_dir}")
    if not (0.0 < args.t <= 1.0):
        raise ConfigError("transmission t must lie in (0, 1]")
    if not (0.0 <= args.airlight <= 1.0):
        raise ConfigError("airlight must lie in [0, 1]")
    names = sorted(f for f in os.listdir(args.clean_dir)
                   if f.endswith(".png"))
    if not names:
        raise ConfigError(f"no PNG files in {args.clean_dir}")
    hazy_dir = os.path.join(args.out_dir, "hazy")
    gt_dir = os.path.join(args.out_dir, "gt")
    os.makedirs(hazy_dir, exist_ok=True)
    os.makedirs(gt_dir, exist_ok=True)
    for i, name in enumerate(names):
        clean = read_image(os.path.join(args.clean_dir, name))
        rng = np.random.default_rng([args.seed, i]) if args.vary else None
        hazy = synthesize_haze(clean, args.t, args.airlight, rng)
        write_image(os.path.join(hazy_dir, name), hazy)
        write_image(os.path.join(gt_dir, name), clean)
    print(f"wrote {len(names)} pairs under {args.out_dir}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikedehaze",
        description="Spiking-neuron U-Net dehazer: train, run and verify.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a YAML run config")
    p.add_argument("config")
    p.add_argument("--resume", default=None,
                   help="checkpoint to resume from (with optimizer state)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="dehaze one PNG image")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--g", type=int, default=4)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a paired dir")
    p.add_argument("checkpoint")
    p.add_argument("data_dir")
    p.add_argument("--g", type=int, default=4)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("cost", help="report parameter and MAC counts")
    p.add_argument("variant", choices=["M", "L", "tiny"])
    p.add_argument("height", type=int)
    p.add_argument("width", type=int)
    p.set_defaults(fn=cmd_cost)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every operation")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate paired hazy/clean data")
    p.add_argument("clean_dir")
    p.add_argument("out_dir")
    p.add_argument("--t", type=float, default=0.7)
    p.add_argument("--airlight", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vary", action="store_true",
                   help="spatially varying transmission field")
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DatasetError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, CheckpointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
