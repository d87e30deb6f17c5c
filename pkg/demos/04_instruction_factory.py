"""
The instruction-data factory, fully offline
===========================================

Training data for stages 2 and 3 is manufactured, not collected: a
provider LLM is prompted with each molecule's name and description, a
judge LLM grades every draft, and only top-scored drafts are assembled
into the final chat dataset.

The client's ``mock:`` endpoint is a deterministic offline provider, so
this whole pipeline runs without a network or an API key — which is also
how the test suite exercises it.
"""

import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from molblend.chem.records import load_corpus
from molblend.datagen import (
    LLMClient,
    assemble_dataset,
    generate_samples,
    judge_filter,
)

CORPUS = Path(__file__).resolve().parents[1] / "tests" / "data" / "corpus.jsonl"
records = load_corpus(CORPUS)[:10]

# --- generation ----------------------------------------------------------
# One request per molecule, fanned out over worker threads, results kept
# in input order.  A per-record failure is recorded, never fatal.
client = LLMClient(endpoint="mock:")
result = generate_samples(client, records, "structural")
print(f"generated {len(result.samples)} samples, "
      f"{len(result.failures)} failures")

sample = result.samples[0]
print(f"\nfirst sample ({sample.molecule_id}, {sample.data_type}):")
for message in sample.messages:
    text = message["content"].replace("\n", " ")
    print(f"  [{message['role']:<9}] {text[:72]}...")

# --- judging -------------------------------------------------------------
# The judge grades each draft 1-4 against the molecule's reference
# description; only the top score survives.  Every input lands in
# exactly one bucket, so nothing is silently lost.
kept, dropped = judge_filter(client, result.samples)
print(f"\njudge kept {len(kept)}, dropped {len(dropped)} "
      f"(conservation: {len(kept) + len(dropped)} == {len(result.samples)})")

# --- assembly ------------------------------------------------------------
# Kept samples become chat rows: a dataset system prompt, a seeded choice
# of instruction from the type's pool, and the provider's reply as the
# assistant turn.  Same inputs + same seed => byte-identical file.
with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "dataset.jsonl"
    counts = assemble_dataset(kept, out, seed=0)
    print(f"\nassembled {counts['total']} rows: {counts}")
    row = json.loads(out.read_text(encoding="utf-8").splitlines()[0])
    print(f"first row user turn: {row['messages'][1]['content'][:72]}...")
    first_bytes = out.read_bytes()
    assemble_dataset(kept, out, seed=0)
    assert out.read_bytes() == first_bytes
    print("rerun with the same seed reproduced the file byte-for-byte")

# --- a stricter judge ----------------------------------------------------
# Judging stamps each sample with its score, so run alternative judges on
# freshly generated drafts.  A mock judge that scores every draft 2 keeps
# nothing, and each casualty carries the reason.
strict = LLMClient(endpoint="mock:score=2")
fresh = generate_samples(client, records, "structural")
_, all_dropped = judge_filter(strict, fresh.samples)
print(f"\na score-2 judge keeps nothing: {len(all_dropped)} dropped, "
      f"reason {all_dropped[0][1]!r}")
