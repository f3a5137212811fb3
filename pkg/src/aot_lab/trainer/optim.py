"""AdamW with decoupled weight decay, and the warmup + cosine-restart schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from ..errors import InvalidArgumentError, NumericFaultError


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    exp_avg: list = field(default_factory=list)
    exp_avg_sq: list = field(default_factory=list)


@torch.no_grad()
def adamw_step(params, grads, state: OptimizerState, lr: float, decay_mask=None) -> OptimizerState:
    """One in-place AdamW update of ``params``.

    Weight decay is applied first and independently of the adaptive step:
    ``p <- p - lr * weight_decay * p``, then ``p <- p - lr * m_hat / (sqrt(v_hat) + eps)``.
    ``decay_mask`` selects which tensors are decayed (all by default).
    """
    params, grads = list(params), list(grads)
    if len(params) != len(grads):
        raise InvalidArgumentError("one gradient per parameter is required")
    if not state.exp_avg:
        state.exp_avg = [torch.zeros_like(p) for p in params]
        state.exp_avg_sq = [torch.zeros_like(p) for p in params]
    if decay_mask is None:
        decay_mask = [True] * len(params)
    for i, g in enumerate(grads):
        if g is None:
            continue
        if g.shape != params[i].shape:
            raise InvalidArgumentError(f"gradient {i} has shape {tuple(g.shape)}, parameter {tuple(params[i].shape)}")
        if not torch.isfinite(g).all():
            raise NumericFaultError(f"non-finite gradient for parameter {i} at step {state.step + 1}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v, decay in zip(params, grads, state.exp_avg, state.exp_avg_sq, decay_mask):
        if g is None:
            continue
        if decay and state.weight_decay:
            p.mul_(1.0 - lr * state.weight_decay)
        m.mul_(b1).add_(g, alpha=1.0 - b1)
        v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
        denom = (v / bc2).sqrt_().add_(state.eps)
        p.addcdiv_(m, denom, value=-lr / bc1)
    return state


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup, then cosine annealing with warm restarts.

    Cycle ``i`` lasts ``period * t_mult**i`` steps and decays from
    ``base_lr`` to ``floor_lr``.
    """

    base_lr: float
    warmup_steps: int = 0
    period: int = 1
    t_mult: int = 1
    floor_lr: float = 0.0

    def __post_init__(self):
        if self.base_lr <= 0:
            raise InvalidArgumentError("base_lr must be positive")
        if self.warmup_steps < 0:
            raise InvalidArgumentError("warmup_steps must be >= 0")
        if self.period < 1 or self.t_mult < 1:
            raise InvalidArgumentError("period and t_mult must be >= 1")

    @classmethod
    def single_cycle(cls, base_lr, warmup_steps, total_steps, floor_lr=0.0):
        """One cosine decay that ends exactly at ``total_steps``."""
        return cls(base_lr, warmup_steps, max(1, total_steps - warmup_steps), 1, floor_lr)


def lr_at(step: int, sched: LrSchedule) -> float:
    if step < 0:
        raise InvalidArgumentError("step must be >= 0")
    if step < sched.warmup_steps:
        return sched.base_lr * step / sched.warmup_steps
    t = step - sched.warmup_steps
    length = sched.period
    if sched.t_mult == 1:
        t %= length
    while t >= length:
        t -= length
        length *= sched.t_mult
    cos = 0.5 * (1.0 + math.cos(math.pi * t / length))
    return sched.floor_lr + (sched.base_lr - sched.floor_lr) * cos
