"""Fusing the two encoder streams and compressing them to query tokens.

The blending module interleaves per-stream self-attention with 2D↔3D
cross-attention (both streams update in parallel from pre-block state) and
concatenates the results into one unified token sequence. The query
transformer then reads that sequence through cross-attention in every
layer, producing a fixed number of query tokens; a parallel text branch
shares the self-attention weights so the alignment objectives can compare
and fuse the two sides under different attention masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from molblend.attention import AttentionMask, MultiHeadAttention, seeded_init_
from molblend.encoders import TokenSequence


@dataclass(frozen=True)
class BlendingConfig:
    hidden_dim: int = 64
    blocks: int = 4
    heads: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_dim % self.heads != 0:
            raise ValueError("hidden_dim must be divisible by heads")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")


class _BlendBlock(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.self_2d = MultiHeadAttention(d, heads)
        self.self_3d = MultiHeadAttention(d, heads)
        self.cross_2d = MultiHeadAttention(d, heads)
        self.cross_3d = MultiHeadAttention(d, heads)
        self.ln_self_2d = nn.LayerNorm(d)
        self.ln_self_3d = nn.LayerNorm(d)
        self.ln_cross_2d = nn.LayerNorm(d)
        self.ln_cross_3d = nn.LayerNorm(d)

    def forward(self, x2: torch.Tensor, x3: torch.Tensor):
        a2 = self.ln_self_2d(x2 + self.self_2d(x2, x2, x2))
        a3 = self.ln_self_3d(x3 + self.self_3d(x3, x3, x3))
        # both cross updates read the other stream's post-self state, which
        # depends only on that stream's pre-block input: a parallel update
        n2 = self.ln_cross_2d(a2 + self.cross_2d(a2, a3, a3))
        n3 = self.ln_cross_3d(a3 + self.cross_3d(a3, a2, a2))
        return n2, n3


class BlendingModule(nn.Module):
    """Cross-modal mixer over the 2D and 3D token sequences."""

    def __init__(self, cfg: BlendingConfig):
        super().__init__()
        self.cfg = cfg
        self.modality_emb = nn.Parameter(torch.empty(2, cfg.hidden_dim))
        self.blocks = nn.ModuleList(
            _BlendBlock(cfg.hidden_dim, cfg.heads) for _ in range(cfg.blocks)
        )
        seeded_init_(self, cfg.seed)

    def forward(self, seq2d: TokenSequence, seq3d: TokenSequence) -> TokenSequence:
        if seq2d.modality != "2d" or seq3d.modality != "3d":
            raise ValueError("blending expects one 2d and one 3d sequence")
        if seq2d.dim != self.cfg.hidden_dim or seq3d.dim != self.cfg.hidden_dim:
            raise ValueError("token dim does not match blending hidden_dim")
        x2 = seq2d.embeddings + self.modality_emb[0]
        x3 = seq3d.embeddings + self.modality_emb[1]
        for block in self.blocks:
            x2, x3 = block(x2, x3)
        return TokenSequence(
            torch.cat([x2, x3], dim=0),
            list(seq2d.roles) + list(seq3d.roles),
            "unified",
        )


@dataclass(frozen=True)
class QFormerConfig:
    hidden_dim: int = 64
    layers: int = 2
    heads: int = 8
    n_queries: int = 8
    vocab_size: int = 263
    max_text_len: int = 160
    ffn_dim: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_dim % self.heads != 0:
            raise ValueError("hidden_dim must be divisible by heads")
        if self.n_queries < 1 or self.layers < 1:
            raise ValueError("n_queries and layers must be >= 1")


def _ffn(d: int, hidden: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(d, hidden), nn.GELU(), nn.Linear(hidden, d))


class _QFormerLayer(nn.Module):
    def __init__(self, cfg: QFormerConfig):
        super().__init__()
        d = cfg.hidden_dim
        self.self_attn = MultiHeadAttention(d, cfg.heads)  # shared q/text
        self.cross_attn = MultiHeadAttention(d, cfg.heads)
        self.ffn_query = _ffn(d, cfg.ffn_dim)
        self.ffn_text = _ffn(d, cfg.ffn_dim)
        self.ln_self = nn.LayerNorm(d)
        self.ln_cross = nn.LayerNorm(d)
        self.ln_ffn_query = nn.LayerNorm(d)
        self.ln_ffn_text = nn.LayerNorm(d)

    def forward_queries(self, q: torch.Tensor, mol: torch.Tensor) -> torch.Tensor:
        q = self.ln_self(q + self.self_attn(q, q, q))
        q = self.ln_cross(q + self.cross_attn(q, mol, mol))
        return self.ln_ffn_query(q + self.ffn_query(q))

    def forward_joint(
        self,
        q: torch.Tensor,
        t: torch.Tensor,
        mol: torch.Tensor,
        mask: AttentionMask,
    ):
        nq = q.shape[0]
        joint = torch.cat([q, t], dim=0)
        joint = self.ln_self(joint + self.self_attn(joint, joint, joint, mask=mask))
        q, t = joint[:nq], joint[nq:]
        q = self.ln_cross(q + self.cross_attn(q, mol, mol))
        q = self.ln_ffn_query(q + self.ffn_query(q))
        t = self.ln_ffn_text(t + self.ffn_text(t))
        return q, t


class QFormer(nn.Module):
    """Query transformer: learnable queries cross-attend into the unified
    molecular tokens at every layer; an optional text branch rides the
    shared self-attention under a caller-supplied mask."""

    def __init__(self, cfg: QFormerConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.hidden_dim
        self.query_tokens = nn.Parameter(torch.empty(cfg.n_queries, d))
        self.tok_emb = nn.Embedding(cfg.vocab_size, d)
        self.pos_emb = nn.Parameter(torch.empty(cfg.max_text_len, d))
        self.layers = nn.ModuleList(
            _QFormerLayer(cfg) for _ in range(cfg.layers)
        )
        seeded_init_(self, cfg.seed)

    @property
    def n_queries(self) -> int:
        return self.cfg.n_queries

    def _check_mol(self, mol_tokens: TokenSequence) -> torch.Tensor:
        if mol_tokens.dim != self.cfg.hidden_dim:
            raise ValueError("molecular token dim does not match hidden_dim")
        return mol_tokens.embeddings

    def embed_text(self, text_ids: list[int] | torch.Tensor) -> torch.Tensor:
        ids = torch.as_tensor(text_ids, dtype=torch.long)
        if ids.dim() != 1 or ids.numel() == 0:
            raise ValueError("text_ids must be a non-empty 1-D sequence")
        if ids.numel() > self.cfg.max_text_len:
            raise ValueError(
                f"text length {ids.numel()} exceeds max {self.cfg.max_text_len}"
            )
        if int(ids.min()) < 0 or int(ids.max()) >= self.cfg.vocab_size:
            raise ValueError("token id outside vocabulary")
        return self.tok_emb(ids) + self.pos_emb[: ids.numel()]

    def forward_queries(self, mol_tokens: TokenSequence) -> torch.Tensor:
        """Molecule-only pass: returns the query summary [n_queries, dim]."""
        mol = self._check_mol(mol_tokens)
        q = self.query_tokens
        for layer in self.layers:
            q = layer.forward_queries(q, mol)
        return q

    def forward_joint(
        self,
        mol_tokens: TokenSequence,
        text_ids: list[int] | torch.Tensor,
        mask: AttentionMask,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Joint pass under a mask regime; returns (queries, text states)."""
        mol = self._check_mol(mol_tokens)
        t = self.embed_text(text_ids)
        n_total = self.cfg.n_queries + t.shape[0]
        if mask.shape != (n_total, n_total):
            raise ValueError(
                f"mask shape {mask.shape} != ({n_total}, {n_total})"
            )
        q = self.query_tokens
        for layer in self.layers:
            q, t = layer.forward_joint(q, t, mol, mask)
        return q, t

    def embed(self, mol_tokens: TokenSequence) -> torch.Tensor:
        """The fixed-size molecular summary handed to the decoder."""
        return self.forward_queries(mol_tokens)
