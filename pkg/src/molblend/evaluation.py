"""Evaluation battery: representative selection, judges, and task harnesses.

Four independent instruments:

* ``select_representatives`` — seeded k-means over Morgan fingerprint bit
  vectors, returning the member nearest each centroid.
* the pairwise response judge — renders the two-assistant comparison
  prompt, parses five 1-10 criteria per assistant, evaluates every pair
  in both presentation orders to cancel position bias, and reduces
  candidate/reference score pairs to relative scores.
* the membrane-permeability harness — builds the task prompt in its
  default / rationale / task-info / few-shot variants, extracts the
  formatted final answer (with one guided retry), and aggregates
  accuracy, label balance, and format-compliance metrics.
* the multiple-choice harness — letter-extraction scoring with
  per-category accuracy.

Any object with ``respond(messages, record=..., ...)`` and
``continue_response(messages, partial, record=..., ...)`` can be
evaluated; tests use small scripted stand-ins in place of a trained
model.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import prompts
from .chem.fingerprint import morgan_fingerprint
from .chem.records import MoleculeRecord
from .chem.smiles import parse_smiles
from .datagen import LLMClient
from .lm import ChatMessage

# ---------------------------------------------------------------------------
# representative molecule selection

_KMEANS_MAX_ITER = 50


def select_representatives(
    corpus: Sequence[MoleculeRecord],
    k: int,
    seed: int = 0,
    radius: int = 2,
    n_bits: int = 512,
) -> list[MoleculeRecord]:
    """Pick ``k`` cluster representatives by seeded k-means on fingerprints.

    Distances are Euclidean over the raw fingerprint bit vectors;
    initialization is k-means++; each cluster contributes the member
    nearest its centroid.  Results are returned in corpus order.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if not 1 <= k <= len(corpus):
        raise ValueError(f"k must be in [1, {len(corpus)}], got {k}")
    if k == len(corpus):
        return list(corpus)

    X = np.stack(
        [
            morgan_fingerprint(parse_smiles(rec.smiles), radius, n_bits).bits.astype(
                np.float64
            )
            for rec in corpus
        ]
    )
    n = len(corpus)
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = [int(rng.integers(n))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    while len(centers) < k:
        total = float(d2.sum())
        if total <= 0.0:
            remaining = [i for i in range(n) if i not in centers]
            centers.append(int(rng.choice(remaining)))
        else:
            centers.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, ((X - X[centers[-1]]) ** 2).sum(axis=1))
    C = X[centers].copy()

    assign = np.full(n, -1)
    for _ in range(_KMEANS_MAX_ITER):
        dists = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
        new_assign = dists.argmin(axis=1)
        for j in range(k):
            if not (new_assign == j).any():
                # revive an empty cluster with the worst-fitted point
                worst = int(dists[np.arange(n), new_assign].argmax())
                new_assign[worst] = j
        if (new_assign == assign).all():
            break
        assign = new_assign
        for j in range(k):
            C[j] = X[assign == j].mean(axis=0)

    reps = []
    for j in range(k):
        members = np.flatnonzero(assign == j)
        local = ((X[members] - C[j]) ** 2).sum(axis=1)
        reps.append(int(members[local.argmin()]))
    return [corpus[i] for i in sorted(reps)]


# ---------------------------------------------------------------------------
# pairwise response judge

_CRITERION_KEYS = {
    "Helpfulness": "helpfulness",
    "Relevance": "relevance",
    "Accuracy": "accuracy",
    "Level of detail": "detail",
    "Overall": "overall",
}
CRITERIA = tuple(_CRITERION_KEYS.values())


@dataclass(frozen=True)
class EvalVerdict:
    """Parsed judge output: five criteria per assistant plus the raw text."""

    scores: Mapping[int, Mapping[str, float]]
    raw_text: str


def render_judge_messages(
    record: MoleculeRecord, level: str, response_a: str, response_b: str
) -> list[dict[str, str]]:
    if level not in prompts.EVAL_QUESTIONS:
        raise ValueError(f"unknown level {level!r}")
    if not response_a or not response_b:
        raise ValueError("both responses must be non-empty")
    user = (
        prompts.JUDGE_USER.replace("{SMILES}", record.smiles)
        .replace("{IUPAC name}", record.iupac)
        .replace("{Description}", record.description)
        .replace("{level}", level)
        .replace("{Response of Assistant 1}", response_a)
        .replace("{Response of Assistant 2}", response_b)
    )
    return [
        {"role": "system", "content": prompts.JUDGE_SYSTEM},
        {"role": "user", "content": user},
    ]


def _parse_sections(
    text: str, line_pattern: str, names: Mapping[str, str]
) -> dict[int, dict[str, float]]:
    scores: dict[int, dict[str, float]] = {}
    for n in (1, 2):
        start = text.find(f"[Assistant {n}]")
        if start < 0:
            raise ValueError(f"verdict missing [Assistant {n}] section")
        end = text.find(f"[Assistant {n + 1}]")
        section = text[start:] if end < 0 else text[start:end]
        parsed: dict[str, float] = {}
        for label, key in names.items():
            match = re.search(line_pattern.format(label=re.escape(label)), section)
            if not match:
                raise ValueError(f"verdict missing {label!r} for assistant {n}")
            value = float(match.group(1))
            if not 1.0 <= value <= 10.0:
                raise ValueError(f"{label} score {value} outside [1, 10]")
            parsed[key] = value
        scores[n] = parsed
    return scores


def parse_judge_verdict(text: str) -> EvalVerdict:
    """Extract per-assistant criterion scores; reject incomplete verdicts."""
    scores = _parse_sections(
        text, r"- {label}:\s*([0-9]+(?:\.[0-9]+)?)", _CRITERION_KEYS
    )
    return EvalVerdict(scores=scores, raw_text=text)


def judge_pairwise(
    client: LLMClient,
    record: MoleculeRecord,
    level: str,
    response_a: str,
    response_b: str,
    retries: int = 1,
) -> EvalVerdict:
    """One judge call; re-asks on unparseable verdicts before giving up."""
    messages = render_judge_messages(record, level, response_a, response_b)
    last: Exception | None = None
    for _ in range(retries + 1):
        verdict_text = client.chat(messages, temperature=0.0)
        try:
            return parse_judge_verdict(verdict_text)
        except ValueError as exc:
            last = exc
    raise ValueError(f"judge verdict rejected after {retries + 1} attempts: {last}")


def evaluate_pair(
    client: LLMClient,
    record: MoleculeRecord,
    level: str,
    response_a: str,
    response_b: str,
    repetitions: int = 1,
) -> dict[str, tuple[float, float]]:
    """Average judge scores over both presentation orders and repetitions.

    Returns per-criterion ``(score_a, score_b)`` with any position bias
    cancelled by the order swap.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    totals = {key: [0.0, 0.0] for key in CRITERIA}
    for _ in range(repetitions):
        forward = judge_pairwise(client, record, level, response_a, response_b)
        backward = judge_pairwise(client, record, level, response_b, response_a)
        for key in CRITERIA:
            totals[key][0] += forward.scores[1][key] + backward.scores[2][key]
            totals[key][1] += forward.scores[2][key] + backward.scores[1][key]
    n = 2 * repetitions
    return {key: (a / n, b / n) for key, (a, b) in totals.items()}


def relative_score(
    candidate_scores: Sequence[Mapping[str, float]],
    reference_scores: Sequence[Mapping[str, float]],
) -> dict[str, float]:
    """Per-criterion mean of candidate/reference ratios across items."""
    if len(candidate_scores) != len(reference_scores):
        raise ValueError("candidate and reference score lists must align")
    if not candidate_scores:
        raise ValueError("no scores to compare")
    keys = set(candidate_scores[0])
    ratios = {key: [] for key in keys}
    for cand, ref in zip(candidate_scores, reference_scores):
        if set(cand) != keys or set(ref) != keys:
            raise ValueError("inconsistent criteria across items")
        for key in keys:
            if ref[key] <= 0:
                raise ValueError(f"non-positive reference score for {key!r}")
            ratios[key].append(cand[key] / ref[key])
    return {key: sum(vals) / len(vals) for key, vals in ratios.items()}


# ---------------------------------------------------------------------------
# membrane-permeability harness

PAMPA_LABELS = ("high", "low_to_moderate")
PAMPA_MODES = ("default", "cot", "task_info", "few_shot")
LABEL_TEXT = {"high": "High permeability.", "low_to_moderate": "Low-to-moderate permeability."}


@dataclass
class PampaItem:
    """One labeled molecule plus, after prediction, the model's output."""

    record: MoleculeRecord
    label: str
    prediction: str | None = None
    response_text: str = ""
    nonconforming: bool = False

    def __post_init__(self) -> None:
        if self.label not in PAMPA_LABELS:
            raise ValueError(f"label must be one of {PAMPA_LABELS}")
        if self.prediction is not None and self.prediction not in PAMPA_LABELS:
            raise ValueError(f"prediction must be one of {PAMPA_LABELS}")


def pampa_messages(
    mode: str = "default",
    examples: Sequence[tuple[MoleculeRecord, str]] | None = None,
) -> list[ChatMessage]:
    """The task chat for one molecule under the requested prompt variant."""
    if mode not in PAMPA_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {PAMPA_MODES}")
    system_parts = [prompts.PAMPA_SYSTEM_BASE]
    if mode == "task_info":
        system_parts.append(prompts.PAMPA_TASK_INFO)
    system_parts.append(prompts.PAMPA_ANSWER_FORMAT)
    user_parts = []
    if mode == "few_shot":
        if not examples:
            raise ValueError("few_shot mode needs labeled examples")
        for i, (rec, label) in enumerate(examples, start=1):
            if label not in PAMPA_LABELS:
                raise ValueError(f"example label must be one of {PAMPA_LABELS}")
            user_parts.append(
                f"Example {i}:\nSMILES: {rec.smiles}\n"
                f"Final answer: {LABEL_TEXT[label]}"
            )
    user_parts.append(prompts.PAMPA_USER)
    if mode == "cot":
        user_parts.append(prompts.PAMPA_COT_LINE)
    return [
        ChatMessage("system", "\n".join(system_parts)),
        ChatMessage("user", "\n".join(user_parts)),
    ]


_FINAL_ANSWER = re.compile(r"final answer\s*:?", re.IGNORECASE)
_HIGH = re.compile(r"\bhigh\b", re.IGNORECASE)
_LOW = re.compile(r"\blow\b|\bmoderate\b", re.IGNORECASE)


def extract_final_answer(text: str) -> str | None:
    """Label after the last ``Final answer`` marker, or None."""
    markers = list(_FINAL_ANSWER.finditer(text))
    if not markers:
        return None
    tail = text[markers[-1].end():]
    high = _HIGH.search(tail)
    low = _LOW.search(tail)
    if high and (not low or high.start() < low.start()):
        return "high"
    if low:
        return "low_to_moderate"
    return None


def pampa_predict(
    model,
    item: PampaItem,
    mode: str = "default",
    examples: Sequence[tuple[MoleculeRecord, str]] | None = None,
    max_new_tokens: int = 96,
) -> PampaItem:
    """Ask the model for a permeability call and extract its final answer.

    When the response ignores the required format, the answer prefix is
    appended and the model continues once from its own reasoning; an
    item that still yields no label is marked nonconforming.
    """
    if mode == "few_shot" and examples:
        if any(rec.id == item.record.id for rec, _ in examples):
            raise ValueError("few-shot examples must not contain the query molecule")
    messages = pampa_messages(mode, examples)
    response = model.respond(messages, record=item.record, max_new_tokens=max_new_tokens)
    label = extract_final_answer(response)
    if label is None:
        partial = response + "\n" + prompts.FINAL_ANSWER_PREFIX
        continuation = model.continue_response(
            messages, partial, record=item.record, max_new_tokens=16
        )
        response = partial + continuation
        label = extract_final_answer(response)
    return dataclasses.replace(
        item,
        prediction=label,
        response_text=response,
        nonconforming=label is None,
    )


def pampa_metrics(items: Sequence[PampaItem]) -> dict:
    """Accuracy, label balance, and format-compliance over predicted items."""
    if not items:
        raise ValueError("no items")
    for item in items:
        if item.prediction is None and not item.nonconforming:
            raise ValueError(f"item {item.record.id!r} has not been predicted")
    predicted = [i for i in items if i.prediction is not None]
    n_nonconforming = sum(1 for i in items if i.nonconforming)
    if not predicted:
        raise ValueError("zero conforming predictions")
    correct = sum(1 for i in predicted if i.prediction == i.label)
    low = sum(1 for i in predicted if i.prediction == "low_to_moderate")
    labels_seen = {i.prediction for i in predicted}
    return {
        "accuracy": correct / len(predicted),
        "label_ratio": low / len(predicted),
        "n_items": len(items),
        "n_predicted": len(predicted),
        "n_nonconforming": n_nonconforming,
        "all_one_label": len(labels_seen) == 1,
        "not_applicable": n_nonconforming > 0.2 * len(items),
    }


# ---------------------------------------------------------------------------
# reasoning-quality judge

_REASONING_KEYS = {"Fidelity": "fidelity", "Helpfulness": "helpfulness"}
REASONING_CRITERIA = tuple(_REASONING_KEYS.values())


def render_reasoning_messages(
    record: MoleculeRecord, response_a: str, response_b: str
) -> list[dict[str, str]]:
    if not response_a or not response_b:
        raise ValueError("both responses must be non-empty")
    user = (
        prompts.REASONING_JUDGE_USER.replace("{SMILES}", record.smiles)
        .replace("{Response of Assistant 1}", response_a)
        .replace("{Response of Assistant 2}", response_b)
    )
    return [
        {"role": "system", "content": prompts.REASONING_JUDGE_SYSTEM},
        {"role": "user", "content": user},
    ]


def parse_reasoning_verdict(text: str) -> dict[int, dict[str, float]]:
    """Fidelity/helpfulness per assistant from the spaced-colon format."""
    return _parse_sections(
        text, r"- {label}\s*:\s*([0-9]+(?:\.[0-9]+)?)", _REASONING_KEYS
    )


def judge_reasoning(
    client: LLMClient,
    record: MoleculeRecord,
    response_a: str,
    response_b: str,
    retries: int = 1,
) -> dict[int, dict[str, float]]:
    messages = render_reasoning_messages(record, response_a, response_b)
    last: Exception | None = None
    for _ in range(retries + 1):
        verdict = client.chat(messages, temperature=0.0)
        try:
            return parse_reasoning_verdict(verdict)
        except ValueError as exc:
            last = exc
    raise ValueError(f"reasoning verdict rejected after {retries + 1} attempts: {last}")


# ---------------------------------------------------------------------------
# multiple-choice question answering

MCQ_CATEGORIES = ("structure", "source", "property", "application")


@dataclass(frozen=True)
class McqItem:
    """One four-option question with its gold letter and category."""

    item_id: str
    category: str
    question: str
    options: Mapping[str, str] = field(default_factory=dict)
    answer: str = ""
    molecule_id: str | None = None

    def __post_init__(self) -> None:
        if self.category not in MCQ_CATEGORIES:
            raise ValueError(f"category must be one of {MCQ_CATEGORIES}")
        if not self.options or not set(self.options) <= set("ABCD"):
            raise ValueError("options must be lettered A-D")
        if self.answer not in self.options:
            raise ValueError(f"answer {self.answer!r} not among options")


def mcq_chat(item: McqItem) -> list[ChatMessage]:
    return [
        ChatMessage("system", prompts.MCQ_SYSTEM),
        ChatMessage("user", prompts.mcq_user_text(item.question, dict(item.options))),
    ]


_OPTION_LETTER = re.compile(r"\b([ABCD])\b")


def extract_option_letter(text: str) -> str | None:
    """First standalone option letter in the response."""
    match = _OPTION_LETTER.search(text)
    return match.group(1) if match else None


def moleculeqa_eval(
    model,
    items: Sequence[McqItem],
    records: Sequence[MoleculeRecord] = (),
    max_new_tokens: int = 8,
) -> dict:
    """Per-category and total accuracy; an unparseable answer counts wrong."""
    if not items:
        raise ValueError("no items")
    by_id = {rec.id: rec for rec in records}
    tallies = {cat: [0, 0] for cat in MCQ_CATEGORIES}
    predictions = {}
    for item in items:
        record = by_id.get(item.molecule_id) if item.molecule_id else None
        response = model.respond(
            mcq_chat(item), record=record, max_new_tokens=max_new_tokens
        )
        letter = extract_option_letter(response)
        predictions[item.item_id] = letter
        tallies[item.category][0] += int(letter == item.answer)
        tallies[item.category][1] += 1
    per_category = {
        cat: hit / total for cat, (hit, total) in tallies.items() if total
    }
    total_hits = sum(hit for hit, _ in tallies.values())
    return {
        "per_category": per_category,
        "accuracy": total_hits / len(items),
        "n_items": len(items),
        "predictions": predictions,
    }
