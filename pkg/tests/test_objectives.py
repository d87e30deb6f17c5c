import math

import pytest
import torch

from molblend.chem import embed_conformer, parse_smiles
from molblend.encoders import EncoderConfig, Graph2DEncoder, PointCloud3DEncoder
from molblend.fusion import BlendingConfig, BlendingModule, QFormer, QFormerConfig
from molblend.lm import BOS_ID, EOT_ID
from molblend.objectives import (
    Stage1Batch,
    Stage1Heads,
    build_attention_mask,
    contrastive_loss,
    generation_loss,
    matching_loss,
    pairwise_similarity,
    recall_at_1,
    stage1_loss,
)

ENC = EncoderConfig(hidden_dim=32, mp_layers=1, attn_layers=1, heads=4, rbf_bins=8)
QF = QFormerConfig(hidden_dim=32, layers=1, heads=4, n_queries=4, max_text_len=64)


def _ids(text: str) -> list[int]:
    return [BOS_ID] + list(text.encode()) + [EOT_ID]


@pytest.fixture(scope="module")
def pipeline():
    enc2d = Graph2DEncoder(ENC)
    enc3d = PointCloud3DEncoder(ENC)
    blend = BlendingModule(BlendingConfig(hidden_dim=32, blocks=1, heads=4))
    qf = QFormer(QF)
    heads = Stage1Heads(QF.hidden_dim, QF.vocab_size)

    def unified(smiles):
        g = parse_smiles(smiles)
        return blend(enc2d(g), enc3d(g, embed_conformer(g, seed=0)))

    return unified, qf, heads


def _batch(pipeline, pairs):
    unified, _, _ = pipeline
    return Stage1Batch(
        molecules=[unified(s) for s, _ in pairs],
        text_ids=[_ids(t) for _, t in pairs],
    )


# ---------------------------------------------------------------- mask shapes


def test_mask_contrastive_pattern():
    m = build_attention_mask("contrastive", 2, 3).allow
    expected = torch.tensor(
        [
            [1, 1, 0, 0, 0],
            [1, 1, 0, 0, 0],
            [0, 0, 1, 1, 1],
            [0, 0, 1, 1, 1],
            [0, 0, 1, 1, 1],
        ],
        dtype=torch.bool,
    )
    assert torch.equal(m, expected)


def test_mask_matching_pattern():
    m = build_attention_mask("matching", 2, 3).allow
    assert m.all()


def test_mask_generation_pattern():
    m = build_attention_mask("generation", 2, 3).allow
    expected = torch.tensor(
        [
            [1, 1, 0, 0, 0],
            [1, 1, 0, 0, 0],
            [1, 1, 1, 0, 0],
            [1, 1, 1, 1, 0],
            [1, 1, 1, 1, 1],
        ],
        dtype=torch.bool,
    )
    assert torch.equal(m, expected)


def test_mask_validation():
    with pytest.raises(ValueError, match="unknown mask mode"):
        build_attention_mask("other", 2, 3)
    with pytest.raises(ValueError):
        build_attention_mask("matching", 0, 3)
    with pytest.raises(ValueError):
        build_attention_mask("matching", 2, -1)


def test_mask_no_text():
    m = build_attention_mask("contrastive", 3, 0).allow
    assert m.shape == (3, 3) and m.all()


# -------------------------------------------------------------------- losses


def test_contrastive_singleton_is_zero(pipeline):
    _, qf, heads = pipeline
    batch = _batch(pipeline, [("CCO", "ethanol")])
    loss = contrastive_loss(qf, heads, batch)
    assert float(loss.detach()) == pytest.approx(0.0, abs=1e-7)


def test_contrastive_uniform_is_log_b(pipeline):
    _, qf, heads = pipeline
    # identical molecule and text in every slot → uniform similarities
    batch = _batch(pipeline, [("CCO", "ethanol")] * 5)
    loss = contrastive_loss(qf, heads, batch, temperature=1.0)
    assert float(loss.detach()) == pytest.approx(math.log(5), abs=1e-6)


def test_contrastive_validations(pipeline):
    _, qf, heads = pipeline
    batch = _batch(pipeline, [("CCO", "ethanol"), ("C", "methane")])
    with pytest.raises(ValueError, match="temperature"):
        contrastive_loss(qf, heads, batch, temperature=0.0)


def test_zero_norm_rejected(pipeline):
    _, qf, _ = pipeline
    heads = Stage1Heads(QF.hidden_dim, QF.vocab_size)
    with torch.no_grad():
        heads.mol_proj.weight.zero_()
        heads.mol_proj.bias.zero_()
    batch = _batch(pipeline, [("CCO", "ethanol")])
    with pytest.raises(ValueError, match="zero-norm"):
        contrastive_loss(qf, heads, batch)


def test_similarity_shape_and_range(pipeline):
    _, qf, heads = pipeline
    batch = _batch(pipeline, [("CCO", "ethanol"), ("c1ccccc1", "benzene")])
    sim = pairwise_similarity(qf, heads, batch)
    assert sim.shape == (2, 2)
    assert (sim <= 1.0 + 1e-6).all() and (sim >= -1.0 - 1e-6).all()


def test_matching_needs_two(pipeline):
    _, qf, heads = pipeline
    batch = _batch(pipeline, [("CCO", "ethanol")])
    with pytest.raises(ValueError, match="at least 2"):
        matching_loss(qf, heads, batch)


def test_matching_deterministic_seed(pipeline):
    _, qf, heads = pipeline
    batch = _batch(pipeline, [("CCO", "ethanol"), ("C", "methane"), ("CC", "ethane")])
    a = matching_loss(qf, heads, batch, seed=3)
    b = matching_loss(qf, heads, batch, seed=3)
    assert torch.equal(a, b)


def test_generation_needs_two_tokens(pipeline):
    unified, qf, heads = pipeline
    batch = Stage1Batch(molecules=[unified("CCO")], text_ids=[[BOS_ID]])
    with pytest.raises(ValueError, match=">= 2"):
        generation_loss(qf, heads, batch)


def test_generation_uniform_logits_ln_v(pipeline):
    _, qf, _ = pipeline
    heads = Stage1Heads(QF.hidden_dim, QF.vocab_size)
    with torch.no_grad():
        heads.gen_head.weight.zero_()
        heads.gen_head.bias.zero_()
    batch = _batch(pipeline, [("CCO", "ethanol")])
    loss = generation_loss(qf, heads, batch)
    assert float(loss.detach()) == pytest.approx(math.log(QF.vocab_size), abs=1e-4)


def test_stage1_loss_composition(pipeline):
    _, qf, heads = pipeline
    batch = _batch(pipeline, [("CCO", "ethanol"), ("C", "methane")])
    total, parts = stage1_loss(qf, heads, batch, seed=1)
    assert set(parts) == {"contrastive", "matching", "generation"}
    assert float(total.detach()) == pytest.approx(sum(parts.values()), rel=1e-5)
    half, _ = stage1_loss(qf, heads, batch, weights=(0.5, 0.5, 0.5), seed=1)
    assert float(half.detach()) == pytest.approx(0.5 * float(total.detach()), rel=1e-5)


def test_batch_validation(pipeline):
    unified, _, _ = pipeline
    with pytest.raises(ValueError, match="align"):
        Stage1Batch(molecules=[unified("C")], text_ids=[])
    with pytest.raises(ValueError, match="empty"):
        Stage1Batch(molecules=[], text_ids=[])


def test_recall_at_1_perfect_on_distinct(pipeline):
    _, qf, heads = pipeline
    batch = _batch(pipeline, [("CCO", "ethanol"), ("c1ccccc1", "benzene")])
    r = recall_at_1(qf, heads, batch)
    assert r in (0.0, 0.5, 1.0)


def test_contrastive_text_grads_do_not_touch_cross_attention(pipeline):
    """In the block-diagonal regime the text branch is molecule-blind: a
    text-only loss must leave every cross-attention weight gradient-free."""
    unified, _, _ = pipeline
    qf = QFormer(QF)
    mol = unified("CCO")
    ids = _ids("ethanol")
    mask = build_attention_mask("contrastive", QF.n_queries, len(ids))
    _, t = qf.forward_joint(mol, ids, mask)
    t.sum().backward()
    assert qf.query_tokens.grad is None or torch.all(qf.query_tokens.grad == 0)
    for name, p in qf.named_parameters():
        if "cross_attn" in name:
            assert p.grad is None or torch.all(p.grad == 0), name
