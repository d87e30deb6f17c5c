"""The assembled molecular chat model.

Wires frozen encoders → blending → query transformer → projected query
tokens injected into the frozen decoder. Owns the stage-wise trainable
sets, section-tagged checkpoints, and the text-in/text-out respond path
used by evaluation harnesses.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from molblend.chem.conformer import conformer_for_record
from molblend.chem.graph import MolGraph
from molblend.chem.records import MoleculeRecord
from molblend.chem.smiles import parse_smiles
from molblend.encoders import (
    EncoderConfig,
    Graph2DEncoder,
    PointCloud3DEncoder,
    TokenSequence,
)
from molblend.fusion import BlendingConfig, BlendingModule, QFormer, QFormerConfig
from molblend.lm import (
    ChatMessage,
    ChatSequence,
    LMConfig,
    LoRAConfig,
    TinyCausalLM,
    attach_lora,
    build_chat_sequence,
    decode_generation,
    generate,
)
from molblend.objectives import Stage1Heads
from molblend.attention import seeded_init_

CHECKPOINT_VERSION = 1

SECTIONS = (
    "encoder_2d",
    "encoder_3d",
    "blending",
    "qformer",
    "stage1_heads",
    "decoder_base",
    "lora",
    "query_proj",
)

STAGES = ("stage1", "stage2", "finetune")


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    blending: BlendingConfig = field(default_factory=BlendingConfig)
    qformer: QFormerConfig = field(default_factory=QFormerConfig)
    lm: LMConfig = field(default_factory=LMConfig)
    lora: LoRAConfig = field(default_factory=LoRAConfig)

    def __post_init__(self) -> None:
        dims = {self.encoder.hidden_dim, self.blending.hidden_dim, self.qformer.hidden_dim}
        if len(dims) != 1:
            raise ValueError(
                "encoder, blending and qformer must share one hidden_dim"
            )


class MolChatModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder_2d = Graph2DEncoder(cfg.encoder)
        self.encoder_3d = PointCloud3DEncoder(cfg.encoder)
        self.blending = BlendingModule(cfg.blending)
        self.qformer = QFormer(cfg.qformer)
        self.stage1_heads = Stage1Heads(
            cfg.qformer.hidden_dim, cfg.qformer.vocab_size, seed=cfg.qformer.seed + 17
        )
        self.decoder = TinyCausalLM(cfg.lm)
        attach_lora(self.decoder, cfg.lora)
        self.query_proj = nn.Linear(cfg.qformer.hidden_dim, cfg.lm.hidden_dim)
        seeded_init_(self.query_proj, cfg.lora.seed + 1)

    # ---------------------------------------------------------------- encode
    def encode_molecule(self, graph: MolGraph, coords: np.ndarray) -> TokenSequence:
        """Unified molecular tokens from both frozen encoders + blending."""
        with torch.no_grad():
            seq2d = self.encoder_2d(graph)
            seq3d = self.encoder_3d(graph, coords)
        return self.blending(seq2d, seq3d)

    def query_summary(self, graph: MolGraph, coords: np.ndarray) -> torch.Tensor:
        """[n_queries, qformer dim] molecular summary."""
        return self.qformer.embed(self.encode_molecule(graph, coords))

    def molecule_prefix(self, graph: MolGraph, coords: np.ndarray) -> torch.Tensor:
        """Query summary projected into the decoder's embedding width."""
        return self.query_proj(self.query_summary(graph, coords))

    def record_inputs(self, record: MoleculeRecord) -> tuple[MolGraph, np.ndarray]:
        graph = parse_smiles(record.smiles)
        return graph, conformer_for_record(record, graph)

    # --------------------------------------------------------------- respond
    def _prefix_for(self, record: MoleculeRecord | None) -> torch.Tensor | None:
        if record is None:
            return None
        graph, coords = self.record_inputs(record)
        return self.molecule_prefix(graph, coords)

    def render_chat(
        self,
        messages: list[ChatMessage],
        record: MoleculeRecord | None = None,
        add_generation_prompt: bool = True,
        partial_assistant: str | None = None,
    ) -> ChatSequence:
        return build_chat_sequence(
            messages,
            n_queries=self.qformer.n_queries,
            include_molecule=record is not None,
            add_generation_prompt=add_generation_prompt,
            partial_assistant=partial_assistant,
        )

    def respond(
        self,
        messages: list[ChatMessage],
        record: MoleculeRecord | None = None,
        mode: str = "greedy",
        max_new_tokens: int = 128,
        temperature: float = 0.5,
        seed: int = 0,
    ) -> str:
        seq = self.render_chat(messages, record, add_generation_prompt=True)
        out = generate(
            self.decoder,
            seq,
            query_embeds=self._prefix_for(record),
            mode=mode,
            max_new_tokens=max_new_tokens,
            temperature=temperature,
            seed=seed,
        )
        return decode_generation(out)

    def continue_response(
        self,
        messages: list[ChatMessage],
        partial: str,
        record: MoleculeRecord | None = None,
        mode: str = "greedy",
        max_new_tokens: int = 32,
        temperature: float = 0.5,
        seed: int = 0,
    ) -> str:
        """Resume an assistant turn that already contains ``partial``."""
        seq = self.render_chat(
            messages, record, add_generation_prompt=False, partial_assistant=partial
        )
        out = generate(
            self.decoder,
            seq,
            query_embeds=self._prefix_for(record),
            mode=mode,
            max_new_tokens=max_new_tokens,
            temperature=temperature,
            seed=seed,
        )
        return decode_generation(out)

    # ------------------------------------------------------- sections/stages
    def section_of(self, param_name: str) -> str:
        if param_name.startswith("encoder_2d."):
            return "encoder_2d"
        if param_name.startswith("encoder_3d."):
            return "encoder_3d"
        if param_name.startswith("blending."):
            return "blending"
        if param_name.startswith("qformer."):
            return "qformer"
        if param_name.startswith("stage1_heads."):
            return "stage1_heads"
        if param_name.startswith("query_proj."):
            return "query_proj"
        if param_name.startswith("decoder."):
            return "lora" if ".lora_" in param_name else "decoder_base"
        raise ValueError(f"parameter {param_name!r} belongs to no section")

    _QFORMER_TEXT_PARTS = (
        "qformer.tok_emb.",
        "qformer.pos_emb",
        ".ffn_text.",
        ".ln_ffn_text.",
    )

    def trainable_parameters(self, stage: str) -> dict[str, nn.Parameter]:
        """Declared trainable set per stage; everything else stays frozen."""
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}; expected {STAGES}")
        out: dict[str, nn.Parameter] = {}
        for name, p in self.named_parameters():
            sec = self.section_of(name)
            if stage == "stage1":
                keep = sec in ("blending", "qformer", "stage1_heads")
            else:
                # the text branch of the query transformer is off the
                # decode path, so it is excluded from stage-2 training
                keep = sec in ("blending", "lora", "query_proj") or (
                    sec == "qformer"
                    and not any(part in name for part in self._QFORMER_TEXT_PARTS)
                )
            if keep:
                out[name] = p
        return out

    def apply_stage_freeze(self, stage: str) -> None:
        trainable = set(self.trainable_parameters(stage))
        for name, p in self.named_parameters():
            p.requires_grad_(name in trainable)


def parameter_checksum(params: dict[str, torch.Tensor]) -> str:
    """Order-independent digest of named tensors (name-sorted, raw bytes)."""
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode("utf-8"))
        h.update(params[name].detach().cpu().numpy().tobytes())
    return h.hexdigest()


def section_checksums(model: MolChatModel) -> dict[str, str]:
    groups: dict[str, dict[str, torch.Tensor]] = {s: {} for s in SECTIONS}
    for name, p in model.named_parameters():
        groups[model.section_of(name)][name] = p
    return {s: parameter_checksum(tensors) for s, tensors in groups.items()}


def save_checkpoint(model: MolChatModel, path) -> None:
    sections: dict[str, dict[str, torch.Tensor]] = {s: {} for s in SECTIONS}
    for name, p in model.named_parameters():
        sections[model.section_of(name)][name] = p.detach().cpu()
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.cfg),
        "sections": sections,
    }
    torch.save(payload, path)


def load_checkpoint(path) -> MolChatModel:
    payload = torch.load(path, weights_only=False)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint version {version!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    raw = payload["config"]
    cfg = ModelConfig(
        encoder=EncoderConfig(**raw["encoder"]),
        blending=BlendingConfig(**raw["blending"]),
        qformer=QFormerConfig(**raw["qformer"]),
        lm=LMConfig(**raw["lm"]),
        lora=LoRAConfig(**raw["lora"]),
    )
    model = MolChatModel(cfg)
    state = {}
    for tensors in payload["sections"].values():
        state.update(tensors)
    missing = set(dict(model.named_parameters())) - set(state)
    if missing:
        raise ValueError(f"checkpoint missing parameters: {sorted(missing)[:5]}")
    with torch.no_grad():
        for name, p in model.named_parameters():
            p.copy_(state[name])
    return model
