import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from molblend.encoders import EncoderConfig
from molblend.fusion import BlendingConfig, QFormerConfig
from molblend.lm import LMConfig, LoRAConfig
from molblend.model import ModelConfig, MolChatModel, section_checksums
from molblend.train import (
    TrainConfig,
    finetune_qa,
    lr_schedule,
    prepare_chat_samples,
    run_instruction_stage,
    run_stage1,
    run_stage2,
)

CFG = ModelConfig(
    encoder=EncoderConfig(hidden_dim=32, mp_layers=1, attn_layers=1, heads=4, rbf_bins=8),
    blending=BlendingConfig(hidden_dim=32, blocks=1, heads=4),
    qformer=QFormerConfig(hidden_dim=32, layers=1, heads=4, n_queries=4, max_text_len=64),
    lm=LMConfig(n_layers=1, hidden_dim=32, heads=4, ffn_dim=64, max_seq_len=192),
    lora=LoRAConfig(r=4, dropout=0.0),
)


def make_model() -> MolChatModel:
    return MolChatModel(CFG)


def chat_samples(corpus, n=4):
    out = []
    for rec in corpus[:n]:
        out.append(
            {
                "molecule_id": rec.id,
                "data_type": "structure",
                "messages": [
                    {"role": "system", "content": "chem helper"},
                    {"role": "user", "content": "name?"},
                    {"role": "assistant", "content": rec.iupac or rec.smiles},
                ],
            }
        )
    return out


# --------------------------------------------------------------------------
# schedule


def test_schedule_hits_peak_exactly():
    assert lr_schedule(1000, 3000) == 1e-4


def test_schedule_hits_min_exactly():
    assert lr_schedule(3000, 3000) == 5e-6


def test_schedule_midpoint_value():
    mid = lr_schedule(2000, 3000)
    assert mid == pytest.approx(5.25e-5, rel=1e-9)


def test_schedule_warmup_is_linear():
    quarter = lr_schedule(250, 3000)
    assert quarter == pytest.approx(2.5e-5, rel=1e-12)
    values = [lr_schedule(s, 3000) for s in range(1, 1001)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_schedule_decay_is_monotone():
    values = [lr_schedule(s, 3000) for s in range(1000, 3001)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_schedule_validation():
    with pytest.raises(ValueError, match="must exceed warmup"):
        lr_schedule(1, 1000, warmup_steps=1000)
    with pytest.raises(ValueError, match="outside"):
        lr_schedule(0, 3000)
    with pytest.raises(ValueError, match="outside"):
        lr_schedule(3001, 3000)
    with pytest.raises(ValueError, match="min_lr"):
        lr_schedule(5, 100, peak_lr=1e-5, min_lr=1e-4, warmup_steps=10)


@settings(max_examples=60, deadline=None)
@given(
    warmup=st.integers(min_value=1, max_value=50),
    extra=st.integers(min_value=1, max_value=200),
    data=st.data(),
)
def test_schedule_always_within_bounds(warmup, extra, data):
    total = warmup + extra
    step = data.draw(st.integers(min_value=1, max_value=total))
    lr = lr_schedule(step, total, warmup_steps=warmup)
    assert 0.0 < lr <= 1e-4
    if step > warmup:
        assert lr >= 5e-6


def test_config_validation():
    with pytest.raises(ValueError, match="unknown stage"):
        TrainConfig(stage="stage9")
    with pytest.raises(ValueError, match=">= 1"):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError, match="min_lr"):
        TrainConfig(min_lr=0.0)


# --------------------------------------------------------------------------
# stage 1


def test_stage1_runs_and_logs(corpus, tmp_path):
    model = make_model()
    cfg = TrainConfig(stage="stage1", epochs=2, batch_size=4, constant_lr=True,
                      peak_lr=1e-3, seed=3)
    metrics = run_stage1(model, corpus[:8], cfg, out_dir=tmp_path)
    assert len(metrics) == 4
    assert [m["step"] for m in metrics] == [1, 2, 3, 4]
    assert all(m["lr"] == 1e-3 for m in metrics)
    assert all(math.isfinite(m["loss"]) for m in metrics)
    assert {"loss_contrastive", "loss_matching", "loss_generation"} <= metrics[0].keys()
    assert (tmp_path / "metrics.jsonl").exists()
    assert (tmp_path / "stage1.pt").exists()


def test_stage1_uses_schedule(corpus):
    model = make_model()
    cfg = TrainConfig(stage="stage1", epochs=4, batch_size=4, warmup_steps=2, seed=0)
    metrics = run_stage1(model, corpus[:8], cfg)
    total = len(metrics)
    for row in metrics:
        assert row["lr"] == lr_schedule(row["step"], total, warmup_steps=2)


def test_stage1_only_declared_sections_change(corpus):
    model = make_model()
    before = section_checksums(model)
    cfg = TrainConfig(stage="stage1", epochs=2, batch_size=4, constant_lr=True, seed=1)
    run_stage1(model, corpus[:8], cfg)
    after = section_checksums(model)
    changed = {s for s in before if before[s] != after[s]}
    assert changed == {"blending", "qformer", "stage1_heads"}


def test_stage1_fixed_seed_reruns_identical(corpus):
    cfg = TrainConfig(stage="stage1", epochs=1, batch_size=4, constant_lr=True, seed=7)
    model_a = make_model()
    metrics_a = run_stage1(model_a, corpus[:8], cfg)
    model_b = make_model()
    metrics_b = run_stage1(model_b, corpus[:8], cfg)
    assert metrics_a == metrics_b
    assert section_checksums(model_a) == section_checksums(model_b)


def test_stage1_validation(corpus):
    model = make_model()
    with pytest.raises(ValueError, match="stage1"):
        run_stage1(model, corpus[:4], TrainConfig(stage="stage2", constant_lr=True))
    with pytest.raises(ValueError, match="no records"):
        run_stage1(model, [], TrainConfig(stage="stage1", constant_lr=True))


def test_stage1_max_steps_cuts_short(corpus):
    model = make_model()
    cfg = TrainConfig(stage="stage1", epochs=10, batch_size=4, constant_lr=True,
                      max_steps=3)
    metrics = run_stage1(model, corpus[:8], cfg)
    assert len(metrics) == 3


# --------------------------------------------------------------------------
# stages 2/3


def test_prepare_skips_overlong_samples(corpus):
    model = make_model()
    samples = chat_samples(corpus, 2)
    samples.append(
        {
            "molecule_id": corpus[0].id,
            "messages": [
                {"role": "user", "content": "x" * 500},
                {"role": "assistant", "content": "y"},
            ],
        }
    )
    prepared, skipped = prepare_chat_samples(model, samples, corpus)
    assert len(prepared) == 2
    assert skipped == 1


def test_prepare_rejects_unknown_molecule(corpus):
    model = make_model()
    bad = [{"molecule_id": "mol-999", "messages": [
        {"role": "user", "content": "a"}, {"role": "assistant", "content": "b"}]}]
    with pytest.raises(ValueError, match="unknown molecule"):
        prepare_chat_samples(model, bad, corpus)


def test_stage2_runs_and_changes_declared_sections(corpus, tmp_path):
    model = make_model()
    before = section_checksums(model)
    cfg = TrainConfig(stage="stage2", epochs=2, batch_size=2, constant_lr=True,
                      peak_lr=1e-3, seed=5)
    metrics = run_stage2(model, chat_samples(corpus), corpus, cfg, out_dir=tmp_path)
    assert len(metrics) == 4
    assert all(math.isfinite(m["loss"]) for m in metrics)
    assert all(m["tokens"] > 0 for m in metrics)
    after = section_checksums(model)
    changed = {s for s in before if before[s] != after[s]}
    assert changed == {"blending", "qformer", "lora", "query_proj"}
    assert (tmp_path / "stage2.pt").exists()


def test_accumulated_gradients_match_large_batch(corpus):
    samples = chat_samples(corpus, 4)
    big = make_model()
    cfg_big = TrainConfig(stage="stage2", epochs=1, batch_size=4,
                          grad_accum_steps=1, constant_lr=True, max_steps=1)
    run_stage2(big, samples, corpus, cfg_big)
    accum = make_model()
    cfg_accum = TrainConfig(stage="stage2", epochs=1, batch_size=2,
                            grad_accum_steps=2, constant_lr=True, max_steps=1)
    run_stage2(accum, samples, corpus, cfg_accum)
    for (name, p_big), (name2, p_acc) in zip(
        big.named_parameters(), accum.named_parameters()
    ):
        assert name == name2
        assert torch.allclose(p_big, p_acc, atol=1e-7), name


def test_samples_without_molecule_are_allowed(corpus):
    model = make_model()
    samples = [
        {
            "molecule_id": None,
            "messages": [
                {"role": "user", "content": "hi"},
                {"role": "assistant", "content": "hello"},
            ],
        }
    ]
    cfg = TrainConfig(stage="stage2", epochs=1, batch_size=1, constant_lr=True)
    metrics = run_stage2(model, samples, corpus, cfg)
    assert len(metrics) == 1


def test_finetune_uses_constant_rate(corpus):
    model = make_model()
    cfg = TrainConfig(stage="finetune", epochs=2, batch_size=2, peak_lr=1e-4)
    metrics = finetune_qa(model, chat_samples(corpus), corpus, cfg)
    assert all(m["lr"] == 1e-4 for m in metrics)


def test_instruction_stage_validation(corpus):
    model = make_model()
    with pytest.raises(ValueError, match="stage2 or finetune"):
        run_instruction_stage(model, chat_samples(corpus), corpus,
                              TrainConfig(stage="stage1", constant_lr=True))
    huge = [{
        "molecule_id": None,
        "messages": [{"role": "user", "content": "x" * 500},
                     {"role": "assistant", "content": "y"}],
    }]
    with pytest.raises(ValueError, match="no usable samples"):
        run_instruction_stage(model, huge, corpus,
                              TrainConfig(stage="stage2", constant_lr=True))
