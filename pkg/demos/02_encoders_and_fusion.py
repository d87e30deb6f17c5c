"""
Two frozen molecular encoders and the blending module
=====================================================

A molecule enters the model twice: as a bond graph (2-D encoder, message
passing) and as a point cloud (3-D encoder, attention biased by pairwise
distances).  The blending module fuses the two token streams with paired
self-/cross-attention and emits one unified sequence; the query
transformer then compresses it to a fixed-size summary for the language
model.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import torch

from molblend.chem.conformer import embed_conformer
from molblend.chem.smiles import parse_smiles
from molblend.model import ModelConfig, MolChatModel

torch.manual_seed(0)

# One model object owns the full stack; the default shapes
# (8 heads, 4 blending blocks, 8 query tokens) run at desk width.
model = MolChatModel(ModelConfig())
model.eval()

graph = parse_smiles("CC(=O)Oc1ccccc1C(=O)O")  # aspirin
coords = embed_conformer(graph, seed=0)

# --- the two views -------------------------------------------------------
with torch.no_grad():
    seq2d = model.encoder_2d(graph)
    seq3d = model.encoder_3d(graph, coords)

# Each encoder prepends one whole-molecule token to the per-atom tokens.
print(f"2-D stream: {seq2d.n_tokens} tokens of width {seq2d.dim}")
print(f"3-D stream: {seq3d.n_tokens} tokens of width {seq3d.dim}")

# --- fusion --------------------------------------------------------------
# The blending module runs self-attention within each stream and
# cross-attention between them (computed in parallel from the same block
# input), adds modality embeddings, and concatenates: "unified" tokens.
with torch.no_grad():
    unified = model.blending(seq2d, seq3d)
print(f"unified stream: {unified.n_tokens} tokens "
      f"(= {seq2d.n_tokens} + {seq3d.n_tokens})")

# --- compression ---------------------------------------------------------
# Learnable query tokens cross-attend into the unified tokens at every
# layer.  However many atoms the molecule has, the summary size is fixed.
with torch.no_grad():
    summary = model.qformer.embed(unified)
print(f"query summary: {tuple(summary.shape)} (n_queries x hidden)")

# --- the invariance that makes this a molecule encoder -------------------
# Atom numbering is an artifact of the input string.  Relabeling the
# atoms permutes the token streams but leaves the summary unchanged,
# because queries pool over tokens via attention rather than position.
perm = torch.randperm(graph.n_atoms).tolist()
permuted_coords = coords.copy()
permuted_coords[perm] = coords
with torch.no_grad():
    summary_perm = model.qformer.embed(
        model.blending(
            model.encoder_2d(graph.permuted(perm)),
            model.encoder_3d(graph.permuted(perm), permuted_coords),
        )
    )
delta = float((summary - summary_perm).abs().max())
print(f"max |change| under atom relabeling: {delta:.2e}")
