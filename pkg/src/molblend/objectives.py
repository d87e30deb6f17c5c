"""Alignment objectives between query tokens and text.

Three losses share one query-transformer forward under different attention
masks: contrastive (block-diagonal, the two sides never see each other),
matching (fully open joint attention, scored by a 2-way head over pooled
queries), and grounded generation (queries closed off among themselves,
text causally attending to itself plus all queries).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import torch
from torch import nn
from torch.nn import functional as F

from molblend.attention import AttentionMask, seeded_init_
from molblend.encoders import TokenSequence
from molblend.fusion import QFormer

MASK_MODES = ("contrastive", "matching", "generation")
_NORM_EPS = 1e-12


def build_attention_mask(mode: str, n_queries: int, n_text: int) -> AttentionMask:
    """Allow-matrix over the joint [queries; text] sequence for a regime."""
    if mode not in MASK_MODES:
        raise ValueError(f"unknown mask mode {mode!r}; expected {MASK_MODES}")
    if n_queries < 1:
        raise ValueError("n_queries must be >= 1")
    if n_text < 0:
        raise ValueError("n_text must be >= 0")
    total = n_queries + n_text
    allow = torch.zeros(total, total, dtype=torch.bool)
    if mode == "contrastive":
        allow[:n_queries, :n_queries] = True
        allow[n_queries:, n_queries:] = True
    elif mode == "matching":
        allow[:, :] = True
    else:  # generation
        allow[:n_queries, :n_queries] = True
        allow[n_queries:, :n_queries] = True
        allow[n_queries:, n_queries:] = torch.tril(
            torch.ones(n_text, n_text, dtype=torch.bool)
        )
    return AttentionMask(allow)


@dataclass
class Stage1Batch:
    """Aligned molecule/text pairs: one unified token sequence and one
    tokenized text (ids already wrapped in begin/end markers) per item."""

    molecules: list[TokenSequence]
    text_ids: list[list[int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.molecules) != len(self.text_ids):
            raise ValueError("molecules and text_ids must align")
        if not self.molecules:
            raise ValueError("empty batch")

    def __len__(self) -> int:
        return len(self.molecules)


class Stage1Heads(nn.Module):
    """Projection and scoring heads owned by the alignment stage."""

    def __init__(
        self,
        hidden_dim: int,
        vocab_size: int,
        proj_dim: int | None = None,
        seed: int = 0,
    ):
        super().__init__()
        proj_dim = proj_dim or hidden_dim
        self.mol_proj = nn.Linear(hidden_dim, proj_dim)
        self.text_proj = nn.Linear(hidden_dim, proj_dim)
        self.match_head = nn.Linear(hidden_dim, 2)
        self.gen_head = nn.Linear(hidden_dim, vocab_size)
        seeded_init_(self, seed)


def _normalize(x: torch.Tensor, what: str) -> torch.Tensor:
    norms = x.norm(dim=-1, keepdim=True)
    if bool((norms < _NORM_EPS).any()):
        raise ValueError(f"zero-norm {what} embedding")
    return x / norms


def _joint(qformer: QFormer, mol, ids, mode: str):
    mask = build_attention_mask(mode, qformer.n_queries, len(ids))
    return qformer.forward_joint(mol, ids, mask)


def pairwise_similarity(
    qformer: QFormer, heads: Stage1Heads, batch: Stage1Batch
) -> torch.Tensor:
    """sim[i, j] = max over query tokens of cosine(query_i, text_cls_j)."""
    q_all, t_all = [], []
    for mol, ids in zip(batch.molecules, batch.text_ids):
        q, t = _joint(qformer, mol, ids, "contrastive")
        q_all.append(heads.mol_proj(q))
        t_all.append(heads.text_proj(t[0]))
    q = _normalize(torch.stack(q_all), "query")  # [B, nq, p]
    t = _normalize(torch.stack(t_all), "text")  # [B, p]
    return torch.einsum("iqp,jp->ijq", q, t).max(dim=-1).values


def contrastive_loss(
    qformer: QFormer,
    heads: Stage1Heads,
    batch: Stage1Batch,
    temperature: float = 0.07,
) -> torch.Tensor:
    """Symmetric cross-entropy over temperature-scaled similarities."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    sim = pairwise_similarity(qformer, heads, batch) / temperature
    targets = torch.arange(len(batch))
    return 0.5 * (
        F.cross_entropy(sim, targets) + F.cross_entropy(sim.t(), targets)
    )


def recall_at_1(
    qformer: QFormer, heads: Stage1Heads, batch: Stage1Batch
) -> float:
    """Fraction of molecules whose best-matching text is their own."""
    with torch.no_grad():
        sim = pairwise_similarity(qformer, heads, batch)
    return float((sim.argmax(dim=1) == torch.arange(len(batch))).float().mean())


def matching_loss(
    qformer: QFormer,
    heads: Stage1Heads,
    batch: Stage1Batch,
    seed: int = 0,
) -> torch.Tensor:
    """2-way classification of aligned vs in-batch-negative pairs."""
    B = len(batch)
    if B < 2:
        raise ValueError("matching loss needs at least 2 pairs for negatives")
    rng = random.Random(seed)
    logits, labels = [], []
    for i in range(B):
        neg = rng.choice([j for j in range(B) if j != i])
        for j, label in ((i, 1), (neg, 0)):
            q, _ = _joint(qformer, batch.molecules[i], batch.text_ids[j], "matching")
            logits.append(heads.match_head(q.mean(dim=0)))
            labels.append(label)
    return F.cross_entropy(torch.stack(logits), torch.tensor(labels))


def generation_loss(
    qformer: QFormer, heads: Stage1Heads, batch: Stage1Batch
) -> torch.Tensor:
    """Next-token cross-entropy on text conditioned on the query tokens."""
    total = None
    n_tokens = 0
    for mol, ids in zip(batch.molecules, batch.text_ids):
        if len(ids) < 2:
            raise ValueError("generation loss needs texts of length >= 2")
        _, t = _joint(qformer, mol, ids, "generation")
        logits = heads.gen_head(t[:-1])
        targets = torch.as_tensor(ids[1:], dtype=torch.long)
        ce = F.cross_entropy(logits, targets, reduction="sum")
        total = ce if total is None else total + ce
        n_tokens += len(ids) - 1
    return total / n_tokens


def stage1_loss(
    qformer: QFormer,
    heads: Stage1Heads,
    batch: Stage1Batch,
    temperature: float = 0.07,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
    seed: int = 0,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted sum of the three objectives plus per-part values."""
    parts = {
        "contrastive": contrastive_loss(qformer, heads, batch, temperature),
        "generation": generation_loss(qformer, heads, batch),
    }
    if len(batch) >= 2:
        parts["matching"] = matching_loss(qformer, heads, batch, seed=seed)
    else:
        parts["matching"] = torch.zeros(())
    w = dict(zip(("contrastive", "matching", "generation"), weights))
    total = sum(w[k] * parts[k] for k in parts)
    return total, {k: float(v.detach()) for k, v in parts.items()}
