"""Masked multi-head scaled-dot-product attention.

The functional core operates on unbatched ``[tokens, dim]`` matrices; masks
are boolean allow-matrices (True = may attend) and masked positions receive
exactly zero weight. An optional additive bias of shape ``[heads, nq, nk]``
supports distance-conditioned attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class AttentionMask:
    """Boolean allow-matrix over (query, key) pairs."""

    allow: torch.Tensor

    def __post_init__(self) -> None:
        if self.allow.dtype is not torch.bool:
            raise ValueError("attention mask must be boolean")
        if self.allow.dim() != 2:
            raise ValueError("attention mask must be 2-D [n_q, n_k]")
        if not bool(self.allow.any(dim=1).all()):
            raise ValueError("attention mask has a fully blocked query row")

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.allow.shape)


def masked_attention(
    queries: torch.Tensor,
    keys: torch.Tensor,
    values: torch.Tensor,
    heads: int,
    mask: AttentionMask | None = None,
    bias: torch.Tensor | None = None,
    return_weights: bool = False,
):
    """Per-head softmax(q·kᵀ/√d_head + bias)·v with hard masking.

    Rows of each head's weight matrix sum to one over allowed keys; blocked
    keys get weight exactly 0.0.
    """
    if queries.dim() != 2 or keys.dim() != 2 or values.dim() != 2:
        raise ValueError("attention operates on 2-D [tokens, dim] matrices")
    nq, d = queries.shape
    nk, dk = keys.shape
    if dk != d or values.shape != (nk, d):
        raise ValueError("queries, keys and values must share the model dim")
    if d % heads != 0:
        raise ValueError(f"model dim {d} not divisible by {heads} heads")
    d_head = d // heads

    q = queries.view(nq, heads, d_head).transpose(0, 1)
    k = keys.view(nk, heads, d_head).transpose(0, 1)
    v = values.view(nk, heads, d_head).transpose(0, 1)
    scores = q @ k.transpose(1, 2) / math.sqrt(d_head)
    if bias is not None:
        if bias.shape != (heads, nq, nk):
            raise ValueError(f"bias must have shape ({heads}, {nq}, {nk})")
        scores = scores + bias
    if mask is not None:
        if mask.shape != (nq, nk):
            raise ValueError(f"mask shape {mask.shape} != ({nq}, {nk})")
        scores = scores.masked_fill(~mask.allow, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    out = (weights @ v).transpose(0, 1).reshape(nq, d)
    if return_weights:
        return out, weights
    return out


class MultiHeadAttention(nn.Module):
    """Learned q/k/v/out projections around the functional core.

    Set ``record_weights`` to capture the post-softmax weights of the most
    recent forward pass (used by the mask-regime checks).
    """

    def __init__(self, d_model: int, heads: int):
        super().__init__()
        if d_model % heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.record_weights = False
        self.last_weights: torch.Tensor | None = None

    def forward(self, query, key, value, mask=None, bias=None):
        out, w = masked_attention(
            self.q_proj(query),
            self.k_proj(key),
            self.v_proj(value),
            self.heads,
            mask=mask,
            bias=bias,
            return_weights=True,
        )
        if self.record_weights:
            self.last_weights = w.detach()
        return self.out_proj(out)


def seeded_init_(module: nn.Module, seed: int, emb_std: float = 0.02) -> None:
    """Deterministically reinitialize a module from a local generator.

    Linear: normal(0, 1/sqrt(fan_in)) weights, zero bias. LayerNorm:
    ones/zeros. Embeddings and bare parameter tables: normal(0, emb_std).
    Walk order is name-sorted, so layouts that share parameter names get
    identical draws regardless of construction order.
    """
    gen = torch.Generator().manual_seed(seed)
    done: set[int] = set()
    for _, sub in sorted(module.named_modules(), key=lambda kv: kv[0]):
        if isinstance(sub, nn.Linear):
            std = 1.0 / math.sqrt(sub.in_features)
            with torch.no_grad():
                sub.weight.normal_(0.0, std, generator=gen)
                if sub.bias is not None:
                    sub.bias.zero_()
            done.update({id(sub.weight), id(sub.bias)})
        elif isinstance(sub, nn.LayerNorm):
            with torch.no_grad():
                sub.weight.fill_(1.0)
                sub.bias.zero_()
            done.update({id(sub.weight), id(sub.bias)})
        elif isinstance(sub, nn.Embedding):
            with torch.no_grad():
                sub.weight.normal_(0.0, emb_std, generator=gen)
            done.add(id(sub.weight))
    for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        if id(p) in done:
            continue
        with torch.no_grad():
            p.normal_(0.0, emb_std, generator=gen)
