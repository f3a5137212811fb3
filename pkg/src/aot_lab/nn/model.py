"""Decoder-only transformer with learned positional embeddings (pre-LN)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import torch
from torch import nn

from ..errors import InvalidArgumentError
from . import ops

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class TransformerConfig:
    d_embed: int
    n_heads: int
    n_layers: int
    context_length: int
    vocab_size: int
    dropout: float = 0.1
    mlp_ratio: int = 4
    precision: str = "float32"

    def __post_init__(self):
        if self.d_embed % self.n_heads:
            raise InvalidArgumentError(f"d_embed={self.d_embed} not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidArgumentError(f"dropout must lie in [0, 1), got {self.dropout}")
        if min(self.d_embed, self.n_heads, self.n_layers, self.context_length,
               self.vocab_size, self.mlp_ratio) < 1:
            raise InvalidArgumentError("all sizes must be positive")
        if self.precision not in _DTYPES:
            raise InvalidArgumentError(f"precision must be one of {sorted(_DTYPES)}")

    @property
    def dtype(self) -> torch.dtype:
        return _DTYPES[self.precision]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def named(cls, name: str, vocab_size: int, context_length: int = 256, **overrides):
        """One of the reference sizes (``nano`` ... ``xl``) or a desk preset."""
        try:
            d, h, n_layers = PRESETS[name.lower()]
        except KeyError:
            raise InvalidArgumentError(f"unknown model size {name!r}; known: {sorted(PRESETS)}") from None
        return cls(d_embed=d, n_heads=h, n_layers=n_layers, context_length=context_length,
                   vocab_size=vocab_size, **overrides)


# name -> (d_embed, n_heads, n_layers)
PRESETS = {
    "nano": (48, 3, 3),
    "micro": (128, 4, 4),
    "mini": (192, 6, 6),
    "small": (380, 10, 10),
    "gpt1": (768, 12, 12),
    "medium": (1024, 16, 24),
    "xl": (1600, 25, 48),
    # desk-scale sizes for the synthetic experiments
    "pico": (64, 4, 2),
    "femto": (32, 2, 2),
}


def parameter_count(cfg: TransformerConfig) -> int:
    """Closed-form count; must agree with ``Transformer(cfg)``."""
    d, v = cfg.d_embed, cfg.vocab_size
    hidden = cfg.mlp_ratio * d
    per_layer = (2 * d                      # ln1
                 + d * 3 * d + 3 * d        # qkv
                 + d * d + d                # attention out
                 + 2 * d                    # ln2
                 + d * hidden + hidden      # mlp in
                 + hidden * d + d)          # mlp out
    return v * d + cfg.context_length * d + cfg.n_layers * per_layer + 2 * d + d * v


# std of the initial logits; the head is scaled by 1/sqrt(d) so fresh
# predictions stay near uniform at every width
HEAD_LOGIT_STD = 0.02


class Transformer(nn.Module):
    """GPT-style language model.

    Logits at position ``t`` predict the token at ``t + 1``. Weight matrices
    are stored as (in, out) and drawn with He initialization
    (``N(0, 2 / fan_in)``); the output head uses a small fixed std so that a
    fresh model predicts a near-uniform distribution.
    """

    def __init__(self, cfg: TransformerConfig, seed: int = 0, dropout_seed: int | None = None):
        super().__init__()
        self.cfg = cfg
        gen = torch.Generator().manual_seed(seed)
        dt = cfg.dtype
        d, hidden = cfg.d_embed, cfg.mlp_ratio * cfg.d_embed

        def he(fan_in, *shape):
            w = torch.randn(*shape, generator=gen, dtype=torch.float64) * math.sqrt(2.0 / fan_in)
            return nn.Parameter(w.to(dt))

        def const(value, *shape):
            return nn.Parameter(torch.full(shape, value, dtype=dt))

        self.tok_emb = he(d, cfg.vocab_size, d)
        self.pos_emb = he(d, cfg.context_length, d)
        self.blocks = nn.ModuleList()
        for _ in range(cfg.n_layers):
            blk = nn.ParameterDict({
                "ln1_w": const(1.0, d), "ln1_b": const(0.0, d),
                "qkv_w": he(d, d, 3 * d), "qkv_b": const(0.0, 3 * d),
                "proj_w": he(d, d, d), "proj_b": const(0.0, d),
                "ln2_w": const(1.0, d), "ln2_b": const(0.0, d),
                "fc_w": he(d, d, hidden), "fc_b": const(0.0, hidden),
                "fc2_w": he(hidden, hidden, d), "fc2_b": const(0.0, d),
            })
            self.blocks.append(blk)
        self.lnf_w = const(1.0, d)
        self.lnf_b = const(0.0, d)
        head = torch.randn(d, cfg.vocab_size, generator=gen, dtype=torch.float64) * (HEAD_LOGIT_STD / math.sqrt(d))
        self.head_w = nn.Parameter(head.to(dt))
        self.dropout_gen = torch.Generator().manual_seed(seed if dropout_seed is None else dropout_seed)

    def reseed_dropout(self, seed: int):
        self.dropout_gen.manual_seed(seed)

    def _drop(self, x):
        return ops.dropout(x, self.cfg.dropout, self.dropout_gen, self.training)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if ids.dim() != 2:
            raise InvalidArgumentError("expected token ids of shape (batch, time)")
        b, t = ids.shape
        if t > cfg.context_length:
            raise InvalidArgumentError(f"sequence length {t} exceeds context {cfg.context_length}")
        h_count, hd = cfg.n_heads, cfg.d_embed // cfg.n_heads
        x = ops.embedding(self.tok_emb, ids) + self.pos_emb[:t]
        x = self._drop(x)
        for blk in self.blocks:
            a = ops.layernorm(x, blk["ln1_w"], blk["ln1_b"])
            qkv = ops.linear(a, blk["qkv_w"], blk["qkv_b"])
            q, k, v = (z.reshape(b, t, h_count, hd).transpose(1, 2) for z in qkv.split(cfg.d_embed, dim=-1))
            y = ops.causal_attention(q, k, v, cfg.dropout, self.dropout_gen, self.training)
            y = y.transpose(1, 2).reshape(b, t, cfg.d_embed)
            x = x + self._drop(ops.linear(y, blk["proj_w"], blk["proj_b"]))
            m = ops.layernorm(x, blk["ln2_w"], blk["ln2_b"])
            m = ops.linear(ops.gelu(ops.linear(m, blk["fc_w"], blk["fc_b"])), blk["fc2_w"], blk["fc2_b"])
            x = x + self._drop(m)
        x = ops.layernorm(x, self.lnf_w, self.lnf_b)
        return ops.check_finite(ops.linear(x, self.head_w), "logits")

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())


def loss_and_per_token(logits: torch.Tensor, targets: torch.Tensor):
    """Mean cross-entropy and the (batch, time) per-position losses, in nats."""
    per = ops.cross_entropy(logits, targets)
    return per.mean(), per


def with_precision(cfg: TransformerConfig, precision: str) -> TransformerConfig:
    return replace(cfg, precision=precision)
