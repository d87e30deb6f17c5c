"""Byte-level causal decoder with molecule-slot injection and LoRA.

The tokenizer is reversible: ids 0-255 are raw UTF-8 bytes, the rest are
structural markers. Chat turns render as::

    [BOS] [SYS] system-bytes [MOL]*n  [USER] bytes [ASST] bytes [EOT] ...

Molecule slots are placeholder positions whose embeddings get overwritten
by projected query tokens. The decoder itself is a small frozen pre-LN
transformer; adaptation happens through low-rank adapters on the attention
projections (zero-initialized B, so fresh adapters are an exact identity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn
from torch.nn import functional as F

from molblend.attention import AttentionMask, masked_attention, seeded_init_

PAD_ID = 256
BOS_ID = 257
EOT_ID = 258
SYS_ID = 259
USER_ID = 260
ASST_ID = 261
MOL_ID = 262
VOCAB_SIZE = 263

SPECIAL_IDS = {
    "pad": PAD_ID,
    "bos": BOS_ID,
    "eot": EOT_ID,
    "system": SYS_ID,
    "user": USER_ID,
    "assistant": ASST_ID,
    "molecule": MOL_ID,
}


class ByteTokenizer:
    """UTF-8 bytes in, UTF-8 bytes out; specials never appear in text."""

    vocab_size = VOCAB_SIZE

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def decode(self, ids: list[int], strict: bool = True) -> str:
        byte_ids = []
        for i in ids:
            if 0 <= i <= 255:
                byte_ids.append(i)
            elif strict:
                raise ValueError(f"id {i} is not a byte; strip specials first")
        return bytes(byte_ids).decode("utf-8", errors="strict" if strict else "replace")


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str


@dataclass
class ChatSequence:
    """Rendered chat: token ids, per-position loss flags, molecule slots."""

    ids: list[int]
    loss_mask: list[bool]
    mol_slots: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.ids) != len(self.loss_mask):
            raise ValueError("ids and loss_mask must align")


_ROLES = ("system", "user", "assistant")


def build_chat_sequence(
    messages: list[ChatMessage],
    n_queries: int = 0,
    include_molecule: bool = False,
    add_generation_prompt: bool = False,
    partial_assistant: str | None = None,
) -> ChatSequence:
    """Render messages to ids. ``include_molecule`` inserts ``n_queries``
    molecule slots after the system message (or right after BOS when there
    is none). ``partial_assistant`` opens an unterminated assistant turn,
    used when continuing a previous response."""
    tok = ByteTokenizer()
    for m in messages:
        if m.role not in _ROLES:
            raise ValueError(f"unknown role {m.role!r}")
    if sum(1 for m in messages if m.role == "system") > 1:
        raise ValueError("at most one system message")
    if messages and any(m.role == "system" for m in messages[1:]):
        raise ValueError("system message must come first")
    if add_generation_prompt and partial_assistant is not None:
        raise ValueError("choose either a generation prompt or a partial turn")

    ids: list[int] = [BOS_ID]
    mask: list[bool] = [False]
    slots: list[int] = []

    def put(token_ids: list[int], flag: bool) -> None:
        ids.extend(token_ids)
        mask.extend([flag] * len(token_ids))

    body = list(messages)
    if body and body[0].role == "system":
        put([SYS_ID], False)
        put(tok.encode(body[0].content), False)
        body = body[1:]
    if include_molecule:
        if n_queries < 1:
            raise ValueError("include_molecule requires n_queries >= 1")
        slots = list(range(len(ids), len(ids) + n_queries))
        put([MOL_ID] * n_queries, False)

    expect = "user"
    for m in body:
        if m.role != expect:
            raise ValueError(
                f"expected a {expect} turn, got {m.role} — turns must alternate"
            )
        if m.role == "user":
            put([USER_ID], False)
            put(tok.encode(m.content), False)
            expect = "assistant"
        else:
            put([ASST_ID], False)
            put(tok.encode(m.content), True)
            put([EOT_ID], True)
            expect = "user"

    if add_generation_prompt:
        if expect != "assistant":
            raise ValueError("generation prompt requires a trailing user turn")
        put([ASST_ID], False)
    if partial_assistant is not None:
        if expect != "assistant":
            raise ValueError("a partial turn requires a trailing user turn")
        put([ASST_ID], False)
        put(tok.encode(partial_assistant), False)
    return ChatSequence(ids, mask, slots)


@dataclass(frozen=True)
class LMConfig:
    vocab_size: int = VOCAB_SIZE
    n_layers: int = 2
    hidden_dim: int = 64
    heads: int = 4
    ffn_dim: int = 256
    max_seq_len: int = 512
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_dim % self.heads != 0:
            raise ValueError("hidden_dim must be divisible by heads")
        if self.vocab_size < VOCAB_SIZE:
            raise ValueError(f"vocab_size must cover the {VOCAB_SIZE} token ids")


class _DecoderBlock(nn.Module):
    def __init__(self, cfg: LMConfig):
        super().__init__()
        d = cfg.hidden_dim
        self.heads = cfg.heads
        self.ln_attn = nn.LayerNorm(d)
        self.attn_q = nn.Linear(d, d)
        self.attn_k = nn.Linear(d, d)
        self.attn_v = nn.Linear(d, d)
        self.attn_out = nn.Linear(d, d)
        self.ln_ffn = nn.LayerNorm(d)
        self.ffn = nn.Sequential(
            nn.Linear(d, cfg.ffn_dim), nn.GELU(), nn.Linear(cfg.ffn_dim, d)
        )

    def forward(self, x: torch.Tensor, mask: AttentionMask) -> torch.Tensor:
        h = self.ln_attn(x)
        attn = masked_attention(
            self.attn_q(h), self.attn_k(h), self.attn_v(h), self.heads, mask=mask
        )
        x = x + self.attn_out(attn)
        return x + self.ffn(self.ln_ffn(x))


class TinyCausalLM(nn.Module):
    """Frozen decoder-only transformer over the byte vocabulary."""

    def __init__(self, cfg: LMConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.hidden_dim)
        self.pos_emb = nn.Parameter(torch.empty(cfg.max_seq_len, cfg.hidden_dim))
        self.blocks = nn.ModuleList(_DecoderBlock(cfg) for _ in range(cfg.n_layers))
        self.ln_final = nn.LayerNorm(cfg.hidden_dim)
        self.lm_head = nn.Linear(cfg.hidden_dim, cfg.vocab_size)
        seeded_init_(self, cfg.seed)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward_embeddings(self, emb: torch.Tensor) -> torch.Tensor:
        T = emb.shape[0]
        if T > self.cfg.max_seq_len:
            raise ValueError(
                f"sequence length {T} exceeds max_seq_len {self.cfg.max_seq_len}"
            )
        mask = AttentionMask(torch.tril(torch.ones(T, T, dtype=torch.bool)))
        x = emb + self.pos_emb[:T]
        for block in self.blocks:
            x = block(x, mask)
        return self.lm_head(self.ln_final(x))

    def forward(self, ids: list[int] | torch.Tensor) -> torch.Tensor:
        return self.forward_embeddings(self.embed_ids(ids))

    def embed_ids(self, ids: list[int] | torch.Tensor) -> torch.Tensor:
        t = torch.as_tensor(ids, dtype=torch.long)
        if t.dim() != 1 or t.numel() == 0:
            raise ValueError("ids must be a non-empty 1-D sequence")
        if int(t.min()) < 0 or int(t.max()) >= self.cfg.vocab_size:
            raise ValueError("token id outside vocabulary")
        return self.tok_emb(t)


@dataclass(frozen=True)
class LoRAConfig:
    r: int = 8
    alpha: float = 32.0
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.r < 1:
            raise ValueError("rank must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def scale(self) -> float:
        return self.alpha / self.r


def lora_apply(
    base_out: torch.Tensor,
    lora_A: torch.Tensor,
    lora_B: torch.Tensor,
    x: torch.Tensor,
    scale: float,
    dropout: nn.Dropout | None = None,
) -> torch.Tensor:
    """base(x) + scale · dropout(x) Aᵀ Bᵀ; dropout active only in training."""
    h = x if dropout is None else dropout(x)
    return base_out + (h @ lora_A.t() @ lora_B.t()) * scale


class LoRALinear(nn.Module):
    """A frozen linear plus a trainable low-rank bypass."""

    def __init__(self, base: nn.Linear, cfg: LoRAConfig, gen: torch.Generator):
        super().__init__()
        self.base = base
        self.cfg = cfg
        a = torch.empty(cfg.r, base.in_features)
        with torch.no_grad():
            a.normal_(0.0, 1.0 / math.sqrt(base.in_features), generator=gen)
        self.lora_A = nn.Parameter(a)
        self.lora_B = nn.Parameter(torch.zeros(base.out_features, cfg.r))
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return lora_apply(
            self.base(x), self.lora_A, self.lora_B, x, self.cfg.scale,
            self.dropout if self.training else None,
        )


_ATTN_TARGETS = ("attn_q", "attn_k", "attn_v", "attn_out")


def attach_lora(lm: TinyCausalLM, cfg: LoRAConfig) -> list[str]:
    """Wrap every attention projection with an adapter; returns their names."""
    gen = torch.Generator().manual_seed(cfg.seed)
    wrapped = []
    for b, block in enumerate(lm.blocks):
        for target in _ATTN_TARGETS:
            base = getattr(block, target)
            if isinstance(base, LoRALinear):
                raise ValueError("adapters already attached")
            setattr(block, target, LoRALinear(base, cfg, gen))
            wrapped.append(f"blocks.{b}.{target}")
    return wrapped


def inject_molecule(
    lm: TinyCausalLM, seq: ChatSequence, query_embeds: torch.Tensor | None
) -> torch.Tensor:
    """Token embeddings with molecule-slot rows replaced by query embeds."""
    emb = lm.embed_ids(seq.ids)
    if seq.mol_slots:
        if query_embeds is None:
            raise ValueError("sequence has molecule slots but no query embeds")
        if query_embeds.shape != (len(seq.mol_slots), emb.shape[1]):
            raise ValueError(
                f"query embeds {tuple(query_embeds.shape)} do not fit "
                f"{len(seq.mol_slots)} slots of width {emb.shape[1]}"
            )
        emb = emb.clone()
        emb[torch.as_tensor(seq.mol_slots, dtype=torch.long)] = query_embeds
    elif query_embeds is not None:
        raise ValueError("query embeds supplied but sequence has no slots")
    return emb


def instruction_loss(
    lm: TinyCausalLM,
    seq: ChatSequence,
    query_embeds: torch.Tensor | None = None,
    reduction: str = "mean",
) -> tuple[torch.Tensor, int]:
    """Next-token cross-entropy restricted to assistant-content positions.

    Returns (loss, n_scored_tokens); with ``reduction="sum"`` the loss is
    the unnormalized sum, which accumulation weights by token counts.
    """
    logits = lm.forward_embeddings(inject_molecule(lm, seq, query_embeds))
    mask = torch.as_tensor(seq.loss_mask[1:], dtype=torch.bool)
    if not bool(mask.any()):
        raise ValueError("no assistant tokens to score")
    targets = torch.as_tensor(seq.ids[1:], dtype=torch.long)[mask]
    ce = F.cross_entropy(logits[:-1][mask], targets, reduction="sum")
    n = int(mask.sum())
    if reduction == "mean":
        return ce / n, n
    if reduction == "sum":
        return ce, n
    raise ValueError(f"unknown reduction {reduction!r}")


def generate(
    lm: TinyCausalLM,
    seq: ChatSequence,
    query_embeds: torch.Tensor | None = None,
    mode: str = "greedy",
    max_new_tokens: int = 64,
    temperature: float = 0.5,
    seed: int = 0,
) -> list[int]:
    """Decode continuation ids until EOT or the token budget runs out."""
    if mode not in ("greedy", "temperature"):
        raise ValueError(f"unknown decoding mode {mode!r}")
    if max_new_tokens < 1:
        raise ValueError("max_new_tokens must be >= 1")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    was_training = lm.training
    lm.eval()
    gen = torch.Generator().manual_seed(seed)
    ids = list(seq.ids)
    out: list[int] = []
    prefix = inject_molecule(lm, seq, query_embeds)
    try:
        with torch.no_grad():
            emb = prefix
            for _ in range(max_new_tokens):
                if emb.shape[0] >= lm.cfg.max_seq_len:
                    break
                logits = lm.forward_embeddings(emb)[-1]
                if mode == "greedy":
                    nxt = int(torch.argmax(logits))
                else:
                    probs = torch.softmax(logits / temperature, dim=-1)
                    nxt = int(torch.multinomial(probs, 1, generator=gen))
                out.append(nxt)
                if nxt == EOT_ID:
                    break
                ids.append(nxt)
                emb = torch.cat([emb, lm.tok_emb.weight[nxt : nxt + 1]], dim=0)
    finally:
        if was_training:
            lm.train()
    return out


def decode_generation(ids: list[int]) -> str:
    """Human-readable text from generated ids: drop specials, stop at EOT."""
    text_ids = []
    for i in ids:
        if i == EOT_ID:
            break
        if 0 <= i <= 255:
            text_ids.append(i)
    return bytes(text_ids).decode("utf-8", errors="replace")
