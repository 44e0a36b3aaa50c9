"""Adam training loop and the finite-difference gradient check."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDivergedError
from .transformer import (
    Batch,
    ModelConfig,
    loss_and_grads,
    loss_only,
    param_shapes,
)

log = logging.getLogger("subicap.train")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # step-schedule stand-in for per-epoch decay; 0 disables
    decay_factor: float = 0.8
    decay_every: int = 500

    def lr_at(self, step: int) -> float:
        if self.decay_every <= 0:
            return self.lr
        return self.lr * self.decay_factor ** (step // self.decay_every)


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, cfg: ModelConfig) -> "AdamState":
        shapes = param_shapes(cfg)
        return cls(
            step=0,
            m={name: np.zeros(shape) for name, shape in shapes},
            v={name: np.zeros(shape) for name, shape in shapes},
        )


def train_step(
    batch: Batch,
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    state: AdamState,
    train_cfg: TrainConfig,
) -> float:
    """One Adam update, in place. Parameters are visited in declaration
    order, so repeated runs are bitwise identical."""
    loss, grads = loss_and_grads(batch, params, cfg)
    if not math.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss {loss} at step {state.step}")
    lr = train_cfg.lr_at(state.step)
    state.step += 1
    t = state.step
    b1, b2 = train_cfg.beta1, train_cfg.beta2
    correction = math.sqrt(1.0 - b2**t) / (1.0 - b1**t)
    for name, _ in param_shapes(cfg):
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= lr * correction * m / (np.sqrt(v) + train_cfg.eps)
    return loss


def fit(
    batch: Batch,
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    train_cfg: TrainConfig,
    steps: int,
    log_every: int = 100,
) -> list[float]:
    """Full-batch training; returns the per-step loss history."""
    state = AdamState.init(cfg)
    history = []
    for step in range(steps):
        loss = train_step(batch, params, cfg, state, train_cfg)
        history.append(loss)
        if log_every and (step % log_every == 0 or step == steps - 1):
            log.info("step=%d loss=%.6f", step, loss)
    return history


def next_token_accuracy(batch: Batch, params, cfg: ModelConfig) -> float:
    """Teacher-forced argmax accuracy over every target position."""
    from .transformer import _decoder_fwd, _encoder_fwd, frame_sequence

    hits = 0
    total = 0
    for regions, ids in batch:
        inputs, targets = frame_sequence(ids)
        q, _ = _encoder_fwd(regions, params, cfg)
        logits, _ = _decoder_fwd(q, inputs, params, cfg)
        hits += int((logits.argmax(-1) == np.asarray(targets)).sum())
        total += len(targets)
    return hits / total


def grad_check(
    batch: Batch,
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    n_coords: int = 50,
    seed: int = 0,
    step: float = 1e-5,
) -> float:
    """Central finite differences on randomly sampled coordinates.

    Returns max over coordinates of |analytic - numeric| divided by
    max(|analytic|, |numeric|, 1e-8). Everything runs in float64; the probe
    step 1e-5 balances truncation against roundoff.
    """
    _, grads = loss_and_grads(batch, params, cfg)
    rng = np.random.default_rng(seed)
    names = [name for name, _ in param_shapes(cfg)]
    worst = 0.0
    for _ in range(n_coords):
        name = names[rng.integers(len(names))]
        arr = params[name]
        idx = np.unravel_index(int(rng.integers(arr.size)), arr.shape)
        keep = arr[idx]
        arr[idx] = keep + step
        up = loss_only(batch, params, cfg)
        arr[idx] = keep - step
        down = loss_only(batch, params, cfg)
        arr[idx] = keep
        numeric = (up - down) / (2.0 * step)
        analytic = grads[name][idx]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
