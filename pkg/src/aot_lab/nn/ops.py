"""Differentiable building blocks.

Gradients come from torch's reverse-mode autograd; every op here is checked
against central finite differences in the test suite. Layer norm, GELU and
cross-entropy call torch's fused kernels. Attention has an explicit path
(used whenever attention dropout is active, so the masks come from the
model's own generator) and a fused path with identical semantics.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from ..errors import InvalidArgumentError, NumericFaultError

NEG_INF = float("-inf")


def check_finite(x: torch.Tensor, where: str) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise NumericFaultError(f"non-finite values in {where}")
    return x


def matmul(a, b):
    if a.shape[-1] != b.shape[-2]:
        raise InvalidArgumentError(f"matmul shape mismatch {tuple(a.shape)} @ {tuple(b.shape)}")
    return a @ b


def add(a, b):
    return a + b


def mul(a, b):
    return a * b


def linear(x, weight, bias=None):
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    y = matmul(x, weight)
    return y if bias is None else y + bias


def softmax(x, dim=-1):
    z = x - x.amax(dim=dim, keepdim=True).detach()
    e = torch.exp(z)
    return e / e.sum(dim=dim, keepdim=True)


def log_softmax(x, dim=-1):
    z = x - x.amax(dim=dim, keepdim=True).detach()
    return z - torch.log(torch.exp(z).sum(dim=dim, keepdim=True))


def layernorm(x, weight, bias, eps=1e-5):
    return F.layer_norm(x, (x.shape[-1],), weight, bias, eps)


def gelu(x):
    """Tanh approximation of GELU."""
    return F.gelu(x, approximate="tanh")


def embedding(weight, ids):
    if ids.numel() and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise InvalidArgumentError("token id outside the embedding table")
    return weight[ids]


def dropout(x, rate: float, generator: torch.Generator | None, training: bool):
    if not training or rate == 0.0:
        return x
    # mask drawn in float32 regardless of x, so precision never changes it
    keep = torch.rand(x.shape, generator=generator, dtype=torch.float32) >= rate
    return x * keep / (1.0 - rate)


def causal_attention(q, k, v, attn_dropout=0.0, generator=None, training=False):
    """Scaled dot-product attention over (batch, heads, time, head_dim).

    Position ``t`` only attends to positions ``<= t``.
    """
    if not (training and attn_dropout > 0.0):
        return F.scaled_dot_product_attention(q, k, v, is_causal=True)
    return causal_attention_explicit(q, k, v, attn_dropout, generator, training)


def causal_attention_explicit(q, k, v, attn_dropout=0.0, generator=None, training=False):
    t = q.shape[-2]
    scores = matmul(q, k.transpose(-2, -1)) / math.sqrt(q.shape[-1])
    future = torch.triu(torch.ones(t, t, dtype=torch.bool), diagonal=1)
    scores = scores.masked_fill(future, NEG_INF)
    att = softmax(scores, dim=-1)
    att = dropout(att, attn_dropout, generator, training)
    return matmul(att, v)


def cross_entropy(logits, targets):
    """Per-position ``-ln softmax(logits)[target]`` in nats.

    ``logits`` has shape (..., V) and ``targets`` the matching leading shape.
    """
    if logits.shape[:-1] != targets.shape:
        raise InvalidArgumentError(
            f"targets {tuple(targets.shape)} do not match logits {tuple(logits.shape)}")
    flat = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), reduction="none")
    return flat.reshape(targets.shape)
