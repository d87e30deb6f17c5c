"""Frozen molecular encoders.

Two randomly initialized, weight-frozen feature extractors turn a molecule
into token sequences: a message-passing network over the bond graph (2D)
and a distance-biased self-attention stack over the conformer (3D). Each
output is ``[graph token; one token per atom]`` with no positional
encodings, so node order carries no signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from molblend.attention import masked_attention, seeded_init_
from molblend.chem.graph import BondOrder, MolGraph
from molblend.chem.smiles import ELEMENTS

ELEMENT_INDEX = {sym: i for i, sym in enumerate(sorted(ELEMENTS))}
N_ELEMENTS = len(ELEMENT_INDEX)
CHARGE_RANGE = 4  # charges clamp to [-4, 4]
_ORDER_INDEX = {
    BondOrder.SINGLE: 0,
    BondOrder.DOUBLE: 1,
    BondOrder.TRIPLE: 2,
    BondOrder.AROMATIC: 3,
}

GRAPH_ROLE = "graph"
NODE_ROLE = "node"


@dataclass(frozen=True)
class EncoderConfig:
    hidden_dim: int = 64
    mp_layers: int = 3
    attn_layers: int = 2
    heads: int = 4
    rbf_bins: int = 16
    rbf_max_dist: float = 8.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_dim <= 0:
            raise ValueError("hidden_dim must be positive")
        if self.hidden_dim % self.heads != 0:
            raise ValueError("hidden_dim must be divisible by heads")
        if min(self.mp_layers, self.attn_layers, self.rbf_bins) < 1:
            raise ValueError("layer and bin counts must be >= 1")


@dataclass
class TokenSequence:
    """Encoder output: embeddings row-aligned with roles.

    Roles are "graph" (position 0) or "node"; modality tags the producing
    stream ("2d", "3d") or "unified" after blending.
    """

    embeddings: torch.Tensor
    roles: list[str] = field(default_factory=list)
    modality: str = "2d"

    def __post_init__(self) -> None:
        if self.embeddings.dim() != 2:
            raise ValueError("embeddings must be [tokens, dim]")
        if len(self.roles) != self.embeddings.shape[0]:
            raise ValueError("one role per token required")
        if not torch.isfinite(self.embeddings).all():
            raise ValueError("non-finite token embedding")

    @property
    def n_tokens(self) -> int:
        return int(self.embeddings.shape[0])

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])


def _atom_indices(graph: MolGraph) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    elem, chg, arom = [], [], []
    for a in graph.atoms:
        if a.element not in ELEMENT_INDEX:
            raise ValueError(f"element {a.element!r} outside encoder vocabulary")
        elem.append(ELEMENT_INDEX[a.element])
        chg.append(max(-CHARGE_RANGE, min(CHARGE_RANGE, a.charge)) + CHARGE_RANGE)
        arom.append(int(a.aromatic))
    return (
        torch.tensor(elem, dtype=torch.long),
        torch.tensor(chg, dtype=torch.long),
        torch.tensor(arom, dtype=torch.long),
    )


class Graph2DEncoder(nn.Module):
    """Bond-graph message passing with order-conditioned transforms."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.hidden_dim
        self.elem_emb = nn.Embedding(N_ELEMENTS, d)
        self.charge_emb = nn.Embedding(2 * CHARGE_RANGE + 1, d)
        self.arom_emb = nn.Embedding(2, d)
        self.self_layers = nn.ModuleList(
            nn.Linear(d, d) for _ in range(cfg.mp_layers)
        )
        self.order_layers = nn.ModuleList(
            nn.ModuleList(nn.Linear(d, d, bias=False) for _ in range(4))
            for _ in range(cfg.mp_layers)
        )
        self.graph_proj = nn.Linear(d, d)
        seeded_init_(self, cfg.seed, emb_std=1.0)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, graph: MolGraph) -> TokenSequence:
        if graph.n_atoms == 0:
            raise ValueError("cannot encode an empty graph")
        elem, chg, arom = _atom_indices(graph)
        h = self.elem_emb(elem) + self.charge_emb(chg) + self.arom_emb(arom)
        n = graph.n_atoms
        adjacency = torch.zeros(4, n, n, dtype=h.dtype)
        for b in graph.bonds:
            o = _ORDER_INDEX[b.order]
            adjacency[o, b.i, b.j] = 1.0
            adjacency[o, b.j, b.i] = 1.0
        for lin_self, lins_order in zip(self.self_layers, self.order_layers):
            agg = torch.zeros_like(h)
            for o, lin in enumerate(lins_order):
                agg = agg + adjacency[o] @ lin(h)
            h = torch.tanh(lin_self(h) + agg)
        graph_token = self.graph_proj(h.mean(dim=0, keepdim=True))
        tokens = torch.cat([graph_token, h], dim=0)
        return TokenSequence(tokens, [GRAPH_ROLE] + [NODE_ROLE] * n, "2d")


class PointCloud3DEncoder(nn.Module):
    """Self-attention over atoms with a pairwise-distance additive bias.

    Distances pass through Gaussian radial basis bins and a linear map to
    per-head biases; only relative geometry enters, so rigid motions of the
    conformer leave the output unchanged.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.hidden_dim
        self.elem_emb = nn.Embedding(N_ELEMENTS, d)
        self.rbf_to_bias = nn.Linear(cfg.rbf_bins, cfg.heads)
        self.qkv = nn.ModuleList(
            nn.ModuleDict(
                {
                    "q": nn.Linear(d, d),
                    "k": nn.Linear(d, d),
                    "v": nn.Linear(d, d),
                    "out": nn.Linear(d, d),
                }
            )
            for _ in range(cfg.attn_layers)
        )
        self.norms = nn.ModuleList(
            nn.LayerNorm(d) for _ in range(cfg.attn_layers)
        )
        self.graph_proj = nn.Linear(d, d)
        centers = torch.linspace(0.0, cfg.rbf_max_dist, cfg.rbf_bins)
        width = (
            float(centers[1] - centers[0]) if cfg.rbf_bins > 1 else 1.0
        )
        self.register_buffer("rbf_centers", centers)
        self.rbf_width = width
        seeded_init_(self, cfg.seed + 1, emb_std=1.0)
        for p in self.parameters():
            p.requires_grad_(False)

    def _distance_bias(self, coords: torch.Tensor) -> torch.Tensor:
        delta = coords[:, None, :] - coords[None, :, :]
        dist = torch.sqrt((delta**2).sum(-1) + 1e-12)
        rbf = torch.exp(
            -((dist[..., None] - self.rbf_centers.to(coords.dtype)) ** 2)
            / (2.0 * self.rbf_width**2)
        )
        bias = self.rbf_to_bias(rbf)  # [n, n, heads]
        return bias.permute(2, 0, 1)

    def forward(self, graph: MolGraph, coords: np.ndarray) -> TokenSequence:
        if graph.n_atoms == 0:
            raise ValueError("cannot encode an empty graph")
        dtype = self.elem_emb.weight.dtype
        pos = torch.as_tensor(np.asarray(coords), dtype=dtype)
        if pos.shape != (graph.n_atoms, 3):
            raise ValueError(
                f"coords shape {tuple(pos.shape)} != ({graph.n_atoms}, 3)"
            )
        if not torch.isfinite(pos).all():
            raise ValueError("non-finite coordinates")
        elem, _, _ = _atom_indices(graph)
        h = self.elem_emb(elem)
        bias = self._distance_bias(pos)
        for proj, norm in zip(self.qkv, self.norms):
            attn = masked_attention(
                proj["q"](h), proj["k"](h), proj["v"](h),
                self.cfg.heads, bias=bias,
            )
            h = norm(h + proj["out"](attn))
        graph_token = self.graph_proj(h.mean(dim=0, keepdim=True))
        tokens = torch.cat([graph_token, h], dim=0)
        return TokenSequence(
            tokens, [GRAPH_ROLE] + [NODE_ROLE] * graph.n_atoms, "3d"
        )
