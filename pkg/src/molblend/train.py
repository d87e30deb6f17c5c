"""Optimization loops for the three training phases.

``run_stage1`` aligns the molecular branch with text through the
contrastive / matching / generation objectives; ``run_stage2`` and
``finetune_qa`` tune the instruction path (blending, projection queries,
and the decoder's low-rank adapters) on chat-formatted samples.  All
loops share one cosine learning-rate schedule with linear warmup and a
token-weighted gradient-accumulation rule: microbatch losses are summed
as unnormalized cross-entropies and divided by the *combined* token
count, so accumulated steps match large-batch steps exactly.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import torch

from .chem.records import MoleculeRecord
from .lm import BOS_ID, EOT_ID, ChatMessage, build_chat_sequence, instruction_loss
from .model import MolChatModel, save_checkpoint
from .objectives import Stage1Batch, stage1_loss

STAGES = ("stage1", "stage2", "finetune")


# --------------------------------------------------------------------------
# configuration and schedule


@dataclass(frozen=True)
class TrainConfig:
    """Shared knobs for every loop; ``stage`` picks the trainable set."""

    stage: str = "stage1"
    epochs: int = 1
    batch_size: int = 4
    peak_lr: float = 1e-4
    min_lr: float = 5e-6
    warmup_steps: int = 1000
    weight_decay: float = 0.05
    grad_accum_steps: int = 1
    constant_lr: bool = False
    max_steps: int | None = None
    temperature: float = 0.07
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.grad_accum_steps < 1:
            raise ValueError("epochs, batch_size, grad_accum_steps must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1 when set")
        if not 0.0 < self.min_lr <= self.peak_lr:
            raise ValueError("need 0 < min_lr <= peak_lr")
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")


def lr_schedule(
    step: int,
    total_steps: int,
    peak_lr: float = 1e-4,
    min_lr: float = 5e-6,
    warmup_steps: int = 1000,
) -> float:
    """Learning rate for 1-indexed optimizer ``step`` of ``total_steps``.

    Linear warmup reaches ``peak_lr`` exactly at ``step == warmup_steps``;
    the cosine decay that follows lands on ``min_lr`` exactly at the final
    step (``cos(pi) == -1`` is exact in IEEE arithmetic).
    """
    if total_steps <= warmup_steps:
        raise ValueError(
            f"total_steps ({total_steps}) must exceed warmup_steps ({warmup_steps})"
        )
    if not 1 <= step <= total_steps:
        raise ValueError(f"step {step} outside [1, {total_steps}]")
    if not 0.0 < min_lr <= peak_lr:
        raise ValueError("need 0 < min_lr <= peak_lr")
    if step <= warmup_steps:
        return peak_lr * (step / warmup_steps)
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return min_lr + 0.5 * (peak_lr - min_lr) * (1.0 + math.cos(math.pi * progress))


def _step_lr(cfg: TrainConfig, step: int, total_steps: int) -> float:
    if cfg.constant_lr:
        return cfg.peak_lr
    return lr_schedule(step, total_steps, cfg.peak_lr, cfg.min_lr, cfg.warmup_steps)


def _make_optimizer(model: MolChatModel, cfg: TrainConfig) -> torch.optim.AdamW:
    params = model.trainable_parameters(cfg.stage)
    return torch.optim.AdamW(
        params.values(), lr=cfg.peak_lr, weight_decay=cfg.weight_decay
    )


def _chunks(items: list, size: int) -> list[list]:
    return [items[i : i + size] for i in range(0, len(items), size)]


def _write_outputs(
    out_dir: str | Path | None,
    model: MolChatModel,
    cfg: TrainConfig,
    metrics: list[dict[str, Any]],
) -> None:
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for row in metrics:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    save_checkpoint(model, out / f"{cfg.stage}.pt")


# --------------------------------------------------------------------------
# stage 1: molecule-text alignment


def encode_text(record: MoleculeRecord, max_len: int) -> list[int]:
    """Marker-wrapped byte ids of the record's best textual field."""
    text = record.description or record.iupac or record.smiles
    body = list(text.encode("utf-8"))[: max_len - 2]
    return [BOS_ID] + body + [EOT_ID]


def stage1_pairs(
    model: MolChatModel, records: Sequence[MoleculeRecord]
) -> list[tuple]:
    """Frozen encoder outputs plus tokenized text for each record."""
    pairs = []
    max_len = model.qformer.cfg.max_text_len
    for rec in records:
        graph, coords = model.record_inputs(rec)
        with torch.no_grad():
            seq2d = model.encoder_2d(graph)
            seq3d = model.encoder_3d(graph, coords)
        pairs.append((seq2d, seq3d, encode_text(rec, max_len)))
    return pairs


def stage1_batch(model: MolChatModel, pairs: Sequence[tuple]) -> Stage1Batch:
    """Blend cached encoder outputs (with gradients) into a stage-1 batch."""
    return Stage1Batch(
        molecules=[model.blending(s2, s3) for s2, s3, _ in pairs],
        text_ids=[ids for _, _, ids in pairs],
    )


def run_stage1(
    model: MolChatModel,
    records: Sequence[MoleculeRecord],
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> list[dict[str, Any]]:
    """Optimize blending + Q-Former + alignment heads over record/text pairs."""
    if cfg.stage != "stage1":
        raise ValueError("run_stage1 requires cfg.stage == 'stage1'")
    if not records:
        raise ValueError("no records to train on")
    torch.manual_seed(cfg.seed)
    model.train()
    model.apply_stage_freeze("stage1")
    opt = _make_optimizer(model, cfg)
    pairs = stage1_pairs(model, records)

    steps_per_epoch = math.ceil(len(pairs) / cfg.batch_size)
    total = cfg.max_steps or cfg.epochs * steps_per_epoch
    metrics: list[dict[str, Any]] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = list(range(len(pairs)))
        random.Random(cfg.seed + epoch).shuffle(order)
        for chunk in _chunks(order, cfg.batch_size):
            step += 1
            lr = _step_lr(cfg, step, total)
            for group in opt.param_groups:
                group["lr"] = lr
            opt.zero_grad()
            batch = stage1_batch(model, [pairs[i] for i in chunk])
            loss, parts = stage1_loss(
                model.qformer,
                model.stage1_heads,
                batch,
                temperature=cfg.temperature,
                weights=cfg.loss_weights,
                seed=cfg.seed + step,
            )
            loss.backward()
            opt.step()
            row = {"step": step, "epoch": epoch, "lr": lr,
                   "loss": float(loss.detach())}
            row.update({f"loss_{k}": v for k, v in parts.items()})
            metrics.append(row)
            if step >= total:
                _write_outputs(out_dir, model, cfg, metrics)
                return metrics
    _write_outputs(out_dir, model, cfg, metrics)
    return metrics


# --------------------------------------------------------------------------
# stages 2/3: instruction tuning on chat samples


def prepare_chat_samples(
    model: MolChatModel,
    samples: Sequence[dict],
    records: Sequence[MoleculeRecord],
) -> tuple[list[tuple], int]:
    """Render samples into chat sequences with cached encoder outputs.

    Each sample is a mapping with ``messages`` (list of role/content
    dicts) and an optional ``molecule_id`` joined against ``records``.
    Sequences longer than the decoder window are skipped and counted.
    """
    by_id = {rec.id: rec for rec in records}
    encoder_cache: dict[str, tuple] = {}
    prepared: list[tuple] = []
    skipped = 0
    for sample in samples:
        msgs = [ChatMessage(m["role"], m["content"]) for m in sample["messages"]]
        mol_id = sample.get("molecule_id")
        enc = None
        if mol_id is not None:
            if mol_id not in by_id:
                raise ValueError(f"sample references unknown molecule {mol_id!r}")
            if mol_id not in encoder_cache:
                graph, coords = model.record_inputs(by_id[mol_id])
                with torch.no_grad():
                    encoder_cache[mol_id] = (
                        model.encoder_2d(graph),
                        model.encoder_3d(graph, coords),
                    )
            enc = encoder_cache[mol_id]
        seq = build_chat_sequence(
            msgs,
            n_queries=model.qformer.n_queries,
            include_molecule=enc is not None,
        )
        if len(seq.ids) > model.decoder.cfg.max_seq_len:
            skipped += 1
            continue
        prepared.append((seq, enc))
    return prepared, skipped


def _sample_loss(model: MolChatModel, seq, enc) -> tuple[torch.Tensor, int]:
    prefix = None
    if enc is not None:
        blended = model.blending(enc[0], enc[1])
        prefix = model.query_proj(model.qformer.embed(blended))
    return instruction_loss(model.decoder, seq, query_embeds=prefix, reduction="sum")


def run_instruction_stage(
    model: MolChatModel,
    samples: Sequence[dict],
    records: Sequence[MoleculeRecord],
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> list[dict[str, Any]]:
    """Shared loop for stage-2 tuning and QA fine-tuning.

    One optimizer step consumes ``grad_accum_steps`` microbatches of
    ``batch_size`` samples; the step loss is the sum of their
    unnormalized cross-entropies divided by their combined token count.
    """
    if cfg.stage not in ("stage2", "finetune"):
        raise ValueError("run_instruction_stage requires stage2 or finetune")
    torch.manual_seed(cfg.seed)
    model.train()
    model.apply_stage_freeze(cfg.stage)
    opt = _make_optimizer(model, cfg)
    prepared, skipped = prepare_chat_samples(model, samples, records)
    if not prepared:
        raise ValueError("no usable samples after length filtering")

    micro_per_epoch = math.ceil(len(prepared) / cfg.batch_size)
    steps_per_epoch = math.ceil(micro_per_epoch / cfg.grad_accum_steps)
    total = cfg.max_steps or cfg.epochs * steps_per_epoch
    metrics: list[dict[str, Any]] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = list(range(len(prepared)))
        random.Random(cfg.seed + epoch).shuffle(order)
        microbatches = _chunks(order, cfg.batch_size)
        for group_ixs in _chunks(microbatches, cfg.grad_accum_steps):
            step += 1
            lr = _step_lr(cfg, step, total)
            for group in opt.param_groups:
                group["lr"] = lr
            opt.zero_grad()
            ce_sums: list[torch.Tensor] = []
            n_tokens = 0
            for micro in group_ixs:
                for i in micro:
                    ce, n = _sample_loss(model, *prepared[i])
                    ce_sums.append(ce)
                    n_tokens += n
            loss = sum(ce_sums) / n_tokens
            loss.backward()
            opt.step()
            metrics.append(
                {"step": step, "epoch": epoch, "lr": lr,
                 "loss": float(loss.detach()), "tokens": n_tokens,
                 "skipped": skipped}
            )
            if step >= total:
                _write_outputs(out_dir, model, cfg, metrics)
                return metrics
    _write_outputs(out_dir, model, cfg, metrics)
    return metrics


def run_stage2(
    model: MolChatModel,
    samples: Sequence[dict],
    records: Sequence[MoleculeRecord],
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> list[dict[str, Any]]:
    """Instruction-tune on generated molecule/chat samples."""
    if cfg.stage != "stage2":
        cfg = dataclasses.replace(cfg, stage="stage2")
    return run_instruction_stage(model, samples, records, cfg, out_dir)


def finetune_qa(
    model: MolChatModel,
    samples: Sequence[dict],
    records: Sequence[MoleculeRecord],
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> list[dict[str, Any]]:
    """Task fine-tuning over question-answering samples at a constant rate."""
    cfg = dataclasses.replace(cfg, stage="finetune", constant_lr=True)
    return run_instruction_stage(model, samples, records, cfg, out_dir)
