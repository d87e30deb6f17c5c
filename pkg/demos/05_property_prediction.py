"""
Evaluation harnesses: permeability, multiple choice, and the judge
==================================================================

Three ways to score a molecular chat model, all runnable offline:

* the membrane-permeability harness prompts for a binary label, parses
  the formatted final answer (retrying once with a guided continuation),
  and aggregates accuracy plus format-compliance metrics;
* the multiple-choice harness extracts option letters and reports
  per-category accuracy;
* the pairwise judge scores two responses on five criteria, in both
  presentation orders, so position bias cancels.

Any object with ``respond``/``continue_response`` methods can be
evaluated — here, scripted stand-ins with canned outputs.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from molblend.chem.records import load_corpus
from molblend.datagen import LLMClient
from molblend.evaluation import (
    McqItem,
    PampaItem,
    evaluate_pair,
    moleculeqa_eval,
    pampa_metrics,
    pampa_predict,
    relative_score,
)

ROOT = Path(__file__).resolve().parents[1]
corpus = {r.id: r for r in load_corpus(ROOT / "tests" / "data" / "corpus.jsonl")}
fixture = [
    json.loads(line)
    for line in (ROOT / "tests" / "data" / "pampa_fixture.jsonl")
    .read_text(encoding="utf-8").splitlines()
]


class Playback:
    """Canned answers keyed by molecule id (stands in for a trained model)."""

    def __init__(self, rows):
        self.rows = {row["molecule_id"]: row for row in rows}

    def respond(self, messages, record=None, **kwargs):
        return self.rows[record.id]["response"]

    def continue_response(self, messages, partial, record=None, **kwargs):
        return self.rows[record.id]["continuation"]


# --- permeability --------------------------------------------------------
model = Playback(fixture)
items = [
    pampa_predict(model, PampaItem(record=corpus[row["molecule_id"]],
                                   label=row["label"]))
    for row in fixture
]
metrics = pampa_metrics(items)
print("permeability metrics:")
for key in ("accuracy", "label_ratio", "n_predicted", "n_nonconforming"):
    print(f"  {key:<16} {metrics[key]}")

# --- multiple choice -----------------------------------------------------
mcq = [
    McqItem("q1", "structure", "How many rings does benzene have?",
            {"A": "0", "B": "1", "C": "2", "D": "3"}, answer="B"),
    McqItem("q2", "property", "Is water a good solvent for salts?",
            {"A": "yes", "B": "no"}, answer="A"),
]


class McqPlayback:
    def respond(self, messages, record=None, **kwargs):
        question = messages[-1].content.splitlines()[0]
        return {"How many rings does benzene have?": "B. one ring",
                "Is water a good solvent for salts?": "The answer is A."}[question]


report = moleculeqa_eval(McqPlayback(), mcq)
print(f"\nmultiple choice: accuracy {report['accuracy']:.2f}, "
      f"per category {report['per_category']}")

# --- pairwise judge ------------------------------------------------------
# The offline mock judge favors whichever response is shown first; running
# both orders and averaging cancels that bias exactly.
client = LLMClient(endpoint="mock:")
record = next(iter(corpus.values()))
scores = evaluate_pair(client, record, "chemical",
                       "A detailed, accurate analysis of the molecule.",
                       "A terse reply.")
print("\njudge (candidate vs reference, averaged over both orders):")
for criterion, (cand, ref) in scores.items():
    print(f"  {criterion:<12} {cand:.2f} vs {ref:.2f}")
ratios = relative_score([{k: v[0] for k, v in scores.items()}],
                        [{k: v[1] for k, v in scores.items()}])
print(f"relative overall score: {ratios['overall']:.3f}")
