"""AdamW with split parameter groups and a cosine learning-rate schedule.

The leak/threshold scalars of the spiking branches form their own group
with a lower base learning rate and no weight decay; decaying a firing
threshold toward zero would change what the recurrence computes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = ["Schedule", "cosine_lr", "OptimState", "adamw_step",
           "is_lif_param", "LR_MAIN", "LR_LIF", "LR_FINAL"]

LR_MAIN = 1e-4
LR_LIF = 5e-5
LR_FINAL = 1e-6
BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8
WEIGHT_DECAY_MAIN = 0.01


@dataclass
class Schedule:
    base_lr: float
    total_steps: int
    final_lr: float = LR_FINAL


def cosine_lr(step: int, schedule: Schedule) -> float:
    """Half-cosine interpolation from base_lr (step 0) to final_lr (total)."""
    if not (0 <= step <= schedule.total_steps):
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    base, final = schedule.base_lr, schedule.final_lr
    return final + 0.5 * (base - final) * \
        (1.0 + math.cos(math.pi * step / schedule.total_steps))


def is_lif_param(name: str) -> bool:
    return name.endswith(".tau") or name.endswith(".v_th")


@dataclass
class OptimState:
    """Per-parameter Adam moments plus a shared step counter."""
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS
    weight_decay_main: float = WEIGHT_DECAY_MAIN
    weight_decay_lif: float = 0.0

    def to_records(self) -> dict[str, np.ndarray]:
        out = {"t": np.asarray([float(self.t)], dtype=np.float32)}
        for name, arr in self.m.items():
            out[f"m.{name}"] = arr
        for name, arr in self.v.items():
            out[f"v.{name}"] = arr
        return out

    @classmethod
    def from_records(cls, records: dict[str, np.ndarray]) -> "OptimState":
        state = cls()
        state.t = int(records["t"][0])
        for name, arr in records.items():
            if name.startswith("m."):
                state.m[name[2:]] = arr.copy()
            elif name.startswith("v."):
                state.v[name[2:]] = arr.copy()
        return state


def adamw_step(params: list[tuple[str, Tensor]], state: OptimState,
               lr_main: float, lr_lif: float):
    """One decoupled-weight-decay Adam update over all named parameters.

    Decay is applied before the moment update; moments use the standard
    bias correction. Parameters without a gradient are an error: every
    learnable leaf must have been reached by backward.
    """
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    for name, p in params:
        if p.grad is None:
            raise ValueError(f"parameter {name} has no gradient")
        if p.grad.shape != p.data.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        lif = is_lif_param(name)
        lr = lr_lif if lif else lr_main
        wd = state.weight_decay_lif if lif else state.weight_decay_main
        if wd:
            p.data *= (1.0 - lr * wd)
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
            p.data.dtype, copy=False)
