"""Instruction-data factory: prompt rendering, LLM calls, filtering, assembly.

The pipeline mirrors a paid-API workflow at desk scale: render a
generation prompt per molecule record, call a chat-completion client
(real HTTP or the deterministic ``mock:`` provider), split conversation
outputs into alternating turns, score every sample with a factual-accuracy
filter that keeps only the top grade, and assemble the survivors into a
line-delimited JSON dataset with seeded instruction selection.  A job
ledger makes interrupted generation runs resumable without repeating
completed calls.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from hashlib import blake2b
from pathlib import Path
from typing import Sequence

from .chem.records import MoleculeRecord
from . import prompts

DATA_TYPES = ("structural", "chem_feature", "bio_feature", "conversation")
LEVELS = ("structural", "chemical", "biological")
LEVEL_FOR_TYPE = {
    "structural": "structural",
    "chem_feature": "chemical",
    "bio_feature": "biological",
    # conversations span all three levels; the filter needs one label and
    # the chemical register sits in the middle of the range they cover
    "conversation": "chemical",
}
KEEP_SCORE = 4

_PLACEHOLDERS = ("{IUPAC name}", "{Description}", "{level}")


class ClientError(RuntimeError):
    """A remote-provider failure that survived the retry policy."""


# ---------------------------------------------------------------------------
# templates


@dataclass(frozen=True)
class PromptTemplate:
    """System/user text pair with literal placeholders."""

    data_type: str
    system: str
    user: str

    def __post_init__(self) -> None:
        if self.data_type not in DATA_TYPES + ("filter",):
            raise ValueError(f"unknown data type {self.data_type!r}")


TEMPLATES = {
    "structural": PromptTemplate(
        "structural", prompts.STRUCTURAL_GEN_SYSTEM, prompts.STRUCTURAL_GEN_USER
    ),
    "chem_feature": PromptTemplate(
        "chem_feature", prompts.FEATURE_GEN_SYSTEM, prompts.FEATURE_GEN_USER
    ),
    "bio_feature": PromptTemplate(
        "bio_feature", prompts.FEATURE_GEN_SYSTEM, prompts.FEATURE_GEN_USER
    ),
    "conversation": PromptTemplate(
        "conversation", prompts.CONVERSATION_GEN_SYSTEM, prompts.CONVERSATION_GEN_USER
    ),
    "filter": PromptTemplate("filter", prompts.FILTER_SYSTEM, prompts.FILTER_USER),
}


def render_prompt(
    template: PromptTemplate,
    record: MoleculeRecord,
    level: str | None = None,
    description: str | None = None,
) -> list[dict[str, str]]:
    """Substitute record fields into a template, yielding chat messages.

    ``description`` overrides the record's own description (the filter
    template scores generated text, not the curated annotation).
    """
    if not record.iupac:
        raise ValueError(f"record {record.id!r} has no IUPAC name")
    text = description if description is not None else record.description
    combined = template.system + "\n" + template.user
    if "{Description}" in combined and not text:
        raise ValueError(f"record {record.id!r} needs a description for this template")
    if "{level}" in combined:
        if level is None:
            raise ValueError("template requires a level")
        if level not in LEVELS:
            raise ValueError(f"unknown level {level!r}; expected one of {LEVELS}")

    def fill(part: str) -> str:
        part = part.replace("{IUPAC name}", record.iupac)
        if text:
            part = part.replace("{Description}", text)
        if level is not None:
            part = part.replace("{level}", level)
        for token in _PLACEHOLDERS:
            if token in part:
                raise ValueError(f"unresolved placeholder {token}")
        return part

    return [
        {"role": "system", "content": fill(template.system)},
        {"role": "user", "content": fill(template.user)},
    ]


# ---------------------------------------------------------------------------
# client


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.25

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")


class LLMClient:
    """Chat-completion client over HTTP, with a deterministic mock provider.

    The endpoint scheme selects the transport: ``http``/``https`` POST a
    ``{model, messages, temperature}`` body and read the assistant text
    from the reply; ``mock:`` answers locally with content-addressed
    text so tests and offline runs are reproducible.  ``mock:score=N``
    pins the grade the mock's filter verdicts report.
    """

    def __init__(
        self,
        endpoint: str = "mock:",
        model: str = "mock-chem",
        auth_env: str = "MOLBLEND_API_KEY",
        max_parallel: int = 4,
        retry: RetryPolicy = RetryPolicy(),
        timeout: float = 30.0,
    ):
        scheme, _, rest = endpoint.partition(":")
        if scheme not in ("mock", "http", "https"):
            raise ValueError(f"unsupported endpoint scheme {scheme!r}")
        if max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        self.endpoint = endpoint
        self.scheme = scheme
        self.model = model
        self.auth_env = auth_env
        self.max_parallel = max_parallel
        self.retry = retry
        self.timeout = timeout
        self.mock_score = KEEP_SCORE
        if scheme == "mock" and rest:
            match = re.fullmatch(r"score=([1-4])", rest)
            if not match:
                raise ValueError(f"bad mock endpoint options {rest!r}")
            self.mock_score = int(match.group(1))

    def chat(self, messages: list[dict[str, str]], temperature: float = 1.0) -> str:
        for i, msg in enumerate(messages):
            if set(msg) != {"role", "content"}:
                raise ValueError(f"message {i} must have exactly role and content")
        if self.scheme == "mock":
            return self._mock_chat(messages)
        return self._http_chat(messages, temperature)

    def _http_chat(self, messages: list[dict[str, str]], temperature: float) -> str:
        body = json.dumps(
            {"model": self.model, "messages": messages, "temperature": temperature}
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_error: Exception | None = None
        for attempt in range(self.retry.attempts):
            if attempt:
                time.sleep(self.retry.backoff * attempt)
            request = urllib.request.Request(
                self.endpoint, data=body, headers=headers, method="POST"
            )
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                return str(payload["choices"][0]["message"]["content"])
            except (urllib.error.URLError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise ClientError(f"request failed after {self.retry.attempts} attempts: {last_error}")

    # -- deterministic offline provider ------------------------------------

    def _mock_chat(self, messages: list[dict[str, str]]) -> str:
        system = messages[0]["content"] if messages else ""
        user = messages[-1]["content"]
        name = _mock_subject(user)
        tag = blake2b(user.encode("utf-8"), digest_size=4).hexdigest()
        if "evaluate the factual accuracy" in system:
            return (
                f"The description of {name} is consistent with its IUPAC name.\n"
                f"Score: {self.mock_score}"
            )
        if "design a conversation" in system:
            return (
                f"USER: What functional groups does {name} contain?\n"
                f"ASSISTANT: {name} carries the groups implied by its name "
                f"(ref {tag}).\n"
                f"USER: How do those groups shape its biological behavior?\n"
                f"ASSISTANT: They set its polarity and reactivity, which govern "
                f"how {name} interacts with biological targets."
            )
        if "evaluate the performance of two AI assistants" in system:
            return _mock_pairwise_verdict(user)
        if "quality of the reasoning process" in system:
            return _mock_reasoning_verdict(user)
        if "molecular structural level" in system:
            return (
                f"{name} is built from the substructures named in its IUPAC "
                f"name; each functional group attaches to the parent skeleton "
                f"at the numbered positions (ref {tag})."
            )
        if "**the" in system:
            level = "chemical" if "chemical properties**" in system else "biological"
            return (
                f"The {level} properties of {name} follow from its structure: "
                f"its functional groups determine the behavior summarized in "
                f"the description (ref {tag})."
            )
        return f"Acknowledged ({tag})."


def _mock_subject(user_text: str) -> str:
    match = re.search(r"Input molecule \(IUPAC name\): (.+)", user_text)
    if match:
        return match.group(1).strip()
    return "the molecule"


def _mock_base_score(response: str) -> int:
    return 4 + blake2b(response.encode("utf-8"), digest_size=2).digest()[0] % 5


def _extract_assistant_sections(user_text: str) -> list[str]:
    sections = []
    for n in (1, 2):
        match = re.search(
            rf"\[Assistant {n}\]\n(.*?)\n\[End of Assistant {n}\]", user_text, re.S
        )
        sections.append(match.group(1) if match else "")
    return sections


def _mock_pairwise_verdict(user_text: str) -> str:
    """Content-addressed scores with a deliberate +1 first-position bias.

    The bias makes single-order judging measurably unfair, which is what
    the both-orders averaging in the evaluation harness must cancel.
    """
    blocks = []
    for position, response in enumerate(_extract_assistant_sections(user_text), start=1):
        base = _mock_base_score(response)
        bonus = 1 if position == 1 else 0
        lines = [f"[Assistant {position}]"]
        for criterion in prompts.JUDGE_CRITERIA:
            wobble = blake2b(
                (criterion + response).encode("utf-8"), digest_size=1
            ).digest()[0] % 2
            lines.append(f"- {criterion}: {min(10, base + bonus + wobble)}")
        blocks.append("\n".join(lines))
    blocks.append("Both responses address the question; scores reflect detail.")
    return "\n".join(blocks)


def _mock_reasoning_verdict(user_text: str) -> str:
    blocks = ["Explanation of the evaluation:", "Both rationales were checked.",
              "Final Decision:"]
    for position, response in enumerate(_extract_assistant_sections(user_text), start=1):
        base = _mock_base_score(response)
        bonus = 1 if position == 1 else 0
        blocks.append(f"[Assistant {position}]")
        for criterion in prompts.REASONING_CRITERIA:
            wobble = blake2b(
                (criterion + response).encode("utf-8"), digest_size=1
            ).digest()[0] % 2
            blocks.append(f"- {criterion} : {min(10, base + bonus + wobble)}")
    return "\n".join(blocks)


# ---------------------------------------------------------------------------
# samples


@dataclass
class InstructionSample:
    """One generated training sample before/after judge filtering."""

    molecule_id: str
    data_type: str
    messages: list[dict[str, str]]
    iupac: str = ""
    judge_score: int | None = None
    malformed: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.data_type not in DATA_TYPES:
            raise ValueError(f"unknown data type {self.data_type!r}")
        if self.judge_score is not None and self.judge_score not in (1, 2, 3, 4):
            raise ValueError("judge_score must be 1-4 when set")

    def response_text(self) -> str:
        """The generated content the filter should grade."""
        if self.data_type == "conversation":
            return "\n".join(
                f"{m['role'].upper()}: {m['content']}"
                for m in self.messages
                if m["role"] in ("user", "assistant")
            )
        return self.messages[-1]["content"]

    def to_dict(self) -> dict:
        return {
            "molecule_id": self.molecule_id,
            "data_type": self.data_type,
            "messages": self.messages,
            "iupac": self.iupac,
            "judge_score": self.judge_score,
            "malformed": self.malformed,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "InstructionSample":
        return cls(**payload)


_TURN_SPLIT = re.compile(r"\b(USER|ASSISTANT)\s*:\s*", re.IGNORECASE)


def split_conversation(text: str) -> list[dict[str, str]] | None:
    """Split generated text into alternating user/assistant turns.

    Returns None when the text has no leading USER marker, does not
    alternate, contains an empty turn, or ends mid-pair.
    """
    parts = _TURN_SPLIT.split(text)
    # parts = [preamble, marker, text, marker, text, ...]
    markers = [p.upper() for p in parts[1::2]]
    texts = [p.strip() for p in parts[2::2]]
    if not markers or markers[0] != "USER" or len(markers) % 2 != 0:
        return None
    expected = ["USER" if i % 2 == 0 else "ASSISTANT" for i in range(len(markers))]
    if markers != expected or any(not t for t in texts):
        return None
    roles = ["user" if m == "USER" else "assistant" for m in markers]
    return [{"role": r, "content": t} for r, t in zip(roles, texts)]


@dataclass
class GenerationResult:
    samples: list[InstructionSample]
    failures: list[dict]


class _Ledger:
    """Append-only per-record job journal guarded by a lock."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self.lock = threading.Lock()
        self.done: dict[str, InstructionSample] = {}
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    entry = json.loads(line)
                    if entry["status"] == "ok":
                        self.done[entry["molecule_id"]] = InstructionSample.from_dict(
                            entry["sample"]
                        )

    def record(self, molecule_id: str, sample: InstructionSample | None,
               error: str | None) -> None:
        if self.path is None:
            return
        entry = {
            "molecule_id": molecule_id,
            "status": "ok" if sample is not None else "error",
            "sample": sample.to_dict() if sample is not None else None,
            "error": error,
        }
        with self.lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


def generate_samples(
    client: LLMClient,
    records: Sequence[MoleculeRecord],
    data_type: str,
    temperature: float = 1.0,
    ledger_path: str | Path | None = None,
) -> GenerationResult:
    """Generate one sample per record, in input order, tolerating failures.

    Requests run on up to ``client.max_parallel`` threads.  With a ledger
    path, previously completed records are reused instead of re-requested.
    """
    if data_type not in DATA_TYPES:
        raise ValueError(f"unknown data type {data_type!r}")
    template = TEMPLATES[data_type]
    level = None
    if data_type in ("chem_feature", "bio_feature"):
        level = LEVEL_FOR_TYPE[data_type]
    ledger = _Ledger(ledger_path)

    def work(record: MoleculeRecord):
        if record.id in ledger.done:
            return ledger.done[record.id], None
        try:
            rendered = render_prompt(template, record, level=level)
            reply = client.chat(rendered, temperature=temperature)
            if data_type == "conversation":
                turns = split_conversation(reply)
                malformed = turns is None
                messages = rendered[:1] + (
                    turns if turns else [{"role": "assistant", "content": reply}]
                )
            else:
                malformed = False
                messages = rendered + [{"role": "assistant", "content": reply}]
            sample = InstructionSample(
                molecule_id=record.id,
                data_type=data_type,
                messages=messages,
                iupac=record.iupac,
                malformed=malformed,
                provenance={
                    "model": client.model,
                    "timestamp": datetime.now(timezone.utc).isoformat(),
                },
            )
            ledger.record(record.id, sample, None)
            return sample, None
        except Exception as exc:  # per-record isolation, never abort the batch
            ledger.record(record.id, None, str(exc))
            return None, {"molecule_id": record.id, "error": str(exc)}

    with ThreadPoolExecutor(max_workers=client.max_parallel) as pool:
        outcomes = list(pool.map(work, records))
    samples = [s for s, _ in outcomes if s is not None]
    failures = [f for _, f in outcomes if f is not None]
    return GenerationResult(samples=samples, failures=failures)


# ---------------------------------------------------------------------------
# filtering


_SCORE_PATTERN = re.compile(r"Score:\s*(\d)")


def parse_score(verdict: str) -> int | None:
    """The last ``Score: <digit>`` in the verdict, or None."""
    matches = _SCORE_PATTERN.findall(verdict)
    if not matches:
        return None
    value = int(matches[-1])
    return value if value in (1, 2, 3, 4) else None


def judge_filter(
    client: LLMClient,
    samples: Sequence[InstructionSample],
    temperature: float = 0.0,
) -> tuple[list[InstructionSample], list[tuple[InstructionSample, str]]]:
    """Keep samples the judge grades with the top score.

    Every input lands in exactly one output: kept, or dropped with a
    reason (``malformed``, ``unscored``, or ``score:N``).
    """
    def work(sample: InstructionSample):
        if sample.malformed:
            return sample, "malformed"
        stub = MoleculeRecord(id=sample.molecule_id, smiles="", iupac=sample.iupac)
        rendered = render_prompt(
            TEMPLATES["filter"],
            stub,
            level=LEVEL_FOR_TYPE[sample.data_type],
            description=sample.response_text(),
        )
        verdict = client.chat(rendered, temperature=temperature)
        score = parse_score(verdict)
        if score is None:
            return sample, "unscored"
        sample.judge_score = score
        if score == KEEP_SCORE:
            return sample, None
        return sample, f"score:{score}"

    with ThreadPoolExecutor(max_workers=client.max_parallel) as pool:
        outcomes = list(pool.map(work, samples))
    kept = [s for s, reason in outcomes if reason is None]
    dropped = [(s, reason) for s, reason in outcomes if reason is not None]
    return kept, dropped


# ---------------------------------------------------------------------------
# assembly


def assemble_dataset(
    kept: Sequence[InstructionSample],
    out_path: str | Path,
    seed: int = 0,
    pools: dict[str, tuple[str, ...]] = prompts.INSTRUCTION_POOLS,
) -> dict[str, int]:
    """Write the final chat dataset as line-delimited JSON; return counts.

    Non-conversation samples get a seeded-uniform instruction from their
    type's pool as the user turn; conversations keep their own turns.
    Identical inputs and seed produce a byte-identical file.
    """
    import random

    for pool_type, pool in pools.items():
        if not pool:
            raise ValueError(f"empty instruction pool for {pool_type!r}")
    rng = random.Random(seed)
    counts = {t: 0 for t in DATA_TYPES}
    lines = []
    for sample in kept:
        if sample.judge_score != KEEP_SCORE:
            raise ValueError(
                f"sample {sample.molecule_id!r} has judge_score "
                f"{sample.judge_score!r}; only top-scored samples are assembled"
            )
        if sample.data_type == "conversation":
            messages = [
                {"role": "system", "content": prompts.CONVERSATION_DATASET_SYSTEM}
            ] + [m for m in sample.messages if m["role"] != "system"]
        else:
            instruction = rng.choice(pools[sample.data_type])
            messages = [
                {"role": "system", "content": prompts.INSTRUCTION_DATASET_SYSTEM},
                {"role": "user", "content": instruction},
                {"role": "assistant", "content": sample.messages[-1]["content"]},
            ]
        counts[sample.data_type] += 1
        row = {
            "molecule_id": sample.molecule_id,
            "data_type": sample.data_type,
            "messages": messages,
        }
        lines.append(json.dumps(row, sort_keys=True, ensure_ascii=False))
    with open(out_path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    counts["total"] = len(kept)
    return counts
