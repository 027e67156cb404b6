"""Cross-entropy, gradient clipping, AdamW and the training loop."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import backprop, ssm
from .errors import EmptyCorpus
from .ssm import ModelConfig, ModelParameters

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-2
    clip_value: float = 1.0
    clip_mode: str = "value"  # "value" (elementwise) or "norm" (global L2)
    batch_size: int = 1
    epochs: int = 50
    max_seq_len: int = 50_000
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not all(0 <= b < 1 for b in self.betas):
            raise ValueError("betas must lie in [0, 1)")
        if self.clip_value <= 0:
            raise ValueError("clip_value must be positive")
        if self.clip_mode not in ("value", "norm"):
            raise ValueError(f"unknown clip_mode {self.clip_mode!r}")
        if self.batch_size != 1:
            raise ValueError("only batch_size=1 is supported")
        if self.epochs < 1 or self.max_seq_len < 2:
            raise ValueError("epochs must be >= 1 and max_seq_len >= 2")


@dataclass
class OptimizerState:
    m: ModelParameters
    v: ModelParameters
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParameters) -> "OptimizerState":
        return cls(params.map(np.zeros_like), params.map(np.zeros_like), 0)


@dataclass
class TrainResult:
    params: ModelParameters
    losses: List[float] = field(default_factory=list)
    opt_state: Optional[OptimizerState] = None


def log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, targets, return_grad=False):
    """Mean next-token loss in nats over T positions.

    ``logits`` is (T, V) and ``targets`` (T,). With ``return_grad`` also
    returns dLoss/dlogits.
    """
    logits = np.atleast_2d(logits)
    targets = np.asarray(targets, dtype=np.int64)
    T = targets.shape[0]
    lp = log_softmax(logits)
    loss = -lp[np.arange(T), targets].mean()
    if not return_grad:
        return loss
    grad = np.exp(lp)
    grad[np.arange(T), targets] -= 1.0
    return loss, grad / T


def loss_and_grads(tokens, params: ModelParameters, cfg: ModelConfig):
    """Loss of predicting ``tokens[1:]`` from prefixes, and its gradients."""
    tokens = np.asarray(tokens, dtype=np.int64)
    cache = {}
    logits = ssm.forward(tokens[:-1], params, cfg, cache=cache)
    loss, dlogits = cross_entropy(logits, tokens[1:], return_grad=True)
    return loss, backprop.backward(cache, dlogits, params)


def clip_gradients(grads: ModelParameters, clip_value: float, mode: str = "value") -> ModelParameters:
    if mode == "value":
        return grads.map(lambda g: np.clip(g, -clip_value, clip_value))
    total = np.sqrt(sum(np.sum(g * g) for _, g in grads.named_tensors()))
    scale = min(1.0, clip_value / (total + 1e-12))
    return grads.map(lambda g: g * scale)


def adamw_step(params: ModelParameters, grads: ModelParameters, state: OptimizerState,
               cfg: TrainConfig) -> Tuple[ModelParameters, OptimizerState]:
    """Decoupled-weight-decay Adam update. Inputs are not modified."""
    b1, b2 = cfg.betas
    t = state.step + 1
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for (name, p), (_, g), (_, m), (_, v) in zip(
        params.named_tensors(), grads.named_tensors(),
        state.m.named_tensors(), state.v.named_tensors(),
    ):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps) + cfg.weight_decay * p
        new_p[name] = p - cfg.learning_rate * update
        new_m[name], new_v[name] = m, v
    n = len(params.blocks)
    return (
        ModelParameters.from_named(new_p, n),
        OptimizerState(ModelParameters.from_named(new_m, n), ModelParameters.from_named(new_v, n), t),
    )


def train(corpus: Sequence[Sequence[int]], cfg: TrainConfig, mcfg: ModelConfig,
          params: Optional[ModelParameters] = None, checkpoint_dir=None,
          labels: Sequence[str] = (), is_label=None) -> TrainResult:
    """Train on token samples, one sample per step, reshuffled every epoch.

    Samples longer than the smaller of the two configured caps are
    truncated. Returns final parameters and the per-epoch mean loss.
    When ``checkpoint_dir`` is given a model file is written after each epoch.
    """
    samples = [np.asarray(s, dtype=np.int64) for s in corpus]
    samples = [s for s in samples if s.size >= 2]
    if not samples:
        raise EmptyCorpus("corpus has no sample with at least two tokens")
    if is_label is not None and not all(is_label(int(s[0])) for s in samples):
        raise ValueError("every sample must start with a label token")
    cap = min(cfg.max_seq_len, mcfg.max_seq_len)
    samples = [s[:cap] for s in samples]

    if params is None:
        params = ssm.init_parameters(mcfg)
    opt = OptimizerState.zeros_like(params)
    rng = np.random.default_rng(cfg.rng_seed)
    losses = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(samples))
        total = 0.0
        for i in order:
            loss, grads = loss_and_grads(samples[i], params, mcfg)
            grads = clip_gradients(grads, cfg.clip_value, cfg.clip_mode)
            params, opt = adamw_step(params, grads, opt, cfg)
            total += loss
        losses.append(total / len(samples))
        log.info("epoch %d mean loss %.4f nats", epoch, losses[-1])
        if checkpoint_dir is not None:
            from .modelfile import save_model
            os.makedirs(checkpoint_dir, exist_ok=True)
            save_model(os.path.join(checkpoint_dir, f"epoch_{epoch:03d}.ntgm"), params, mcfg, labels)
    return TrainResult(params, losses, opt)


def write_loss_csv(losses: Sequence[float], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "mean_loss_nats"])
        for i, loss in enumerate(losses, 1):
            w.writerow([i, f"{loss:.6f}"])
