"""Command-line entry point wiring every pipeline stage together.

One executable, thirteen subcommands: molecule inspection (``parse``,
``fingerprint``), corpus curation (``select-reps``), the instruction-data
factory (``datagen``, ``filter``, ``assemble``), the three training
phases (``train-stage1``, ``train-stage2``, ``finetune-qa``), the
evaluation battery (``eval-judge``, ``eval-pampa``, ``eval-mqa``), and
free-form ``generate``.

Conventions shared by all subcommands: long-form flags only; an optional
``--config`` file of flat ``KEY=VALUE`` lines supplies defaults that
explicit flags override; every run that writes an artifact also writes a
manifest (command, argument snapshot, seed, SHA-256 of each input file,
timestamp) next to it.  Exit codes: 0 success, 1 usage error, 2 data
error, 3 remote-client failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from .chem.records import load_corpus, save_corpus
from .chem.smiles import ParseError, parse_smiles, write_smiles
from .chem.fingerprint import morgan_fingerprint
from .datagen import (
    ClientError,
    InstructionSample,
    LLMClient,
    RetryPolicy,
    assemble_dataset,
    generate_samples,
    judge_filter,
)
from .encoders import EncoderConfig
from .evaluation import (
    PampaItem,
    McqItem,
    evaluate_pair,
    moleculeqa_eval,
    pampa_metrics,
    pampa_predict,
    relative_score,
    select_representatives,
)
from .fusion import BlendingConfig, QFormerConfig
from .lm import ChatMessage, LMConfig, LoRAConfig
from .model import ModelConfig, MolChatModel, load_checkpoint
from .train import TrainConfig, finetune_qa, run_stage1, run_stage2

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_REMOTE = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise _UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# shared helpers


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{i}: invalid JSON ({exc})") from exc
    return rows


def _write_jsonl(path: str | Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def _write_manifest(target: Path, args: argparse.Namespace, inputs) -> None:
    target = Path(target)
    path = target / "manifest.json" if target.is_dir() else target.with_name(
        target.name + ".manifest.json"
    )
    snapshot = {
        k: v for k, v in vars(args).items() if k not in ("handler",) and v is not ...
    }
    manifest = {
        "command": args.command,
        "args": snapshot,
        "seed": getattr(args, "seed", None),
        "inputs": {
            str(p): _sha256(Path(p)) for p in inputs if p and Path(p).is_file()
        },
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _read_kv_config(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{i}: expected KEY=VALUE, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


_TRUE_WORDS = ("1", "true", "yes", "on")


def _config_defaults(subparser: argparse.ArgumentParser, path: str) -> dict:
    """Convert a KEY=VALUE file into typed defaults for one subcommand."""
    raw = _read_kv_config(path)
    dests = {}
    for action in subparser._actions:
        dests[action.dest] = action
    unknown = set(raw) - set(dests)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    converted = {}
    for key, value in raw.items():
        action = dests[key]
        if isinstance(
            action, (argparse._StoreTrueAction, argparse._StoreFalseAction)
        ):
            converted[key] = value.lower() in _TRUE_WORDS
        elif action.type is not None:
            converted[key] = action.type(value)
        else:
            converted[key] = value
        action.required = False  # the config file satisfied this flag
    return converted


def _print(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _client(args) -> LLMClient:
    return LLMClient(
        endpoint=args.provider,
        model=args.model,
        max_parallel=args.max_parallel,
        retry=RetryPolicy(attempts=args.retries),
    )


_MODEL_KEYS = {
    "hidden_dim": int, "enc_mp_layers": int, "enc_attn_layers": int,
    "enc_heads": int, "rbf_bins": int, "blocks": int, "blend_heads": int,
    "qformer_layers": int, "qformer_heads": int, "n_queries": int,
    "max_text_len": int, "ffn_dim": int, "lm_layers": int, "lm_heads": int,
    "lm_ffn_dim": int, "max_seq_len": int, "lora_r": int,
    "lora_dropout": float, "seed": int,
}


def _build_model(model_config: str | None) -> MolChatModel:
    if model_config is None:
        return MolChatModel(ModelConfig())
    raw = _read_kv_config(model_config)
    unknown = set(raw) - set(_MODEL_KEYS)
    if unknown:
        raise ValueError(f"unknown model config keys: {sorted(unknown)}")
    v = {key: _MODEL_KEYS[key](value) for key, value in raw.items()}
    hidden = v.get("hidden_dim", 64)
    seed = v.get("seed", 0)
    cfg = ModelConfig(
        encoder=EncoderConfig(
            hidden_dim=hidden,
            mp_layers=v.get("enc_mp_layers", 3),
            attn_layers=v.get("enc_attn_layers", 2),
            heads=v.get("enc_heads", 4),
            rbf_bins=v.get("rbf_bins", 16),
            seed=seed,
        ),
        blending=BlendingConfig(
            hidden_dim=hidden,
            blocks=v.get("blocks", 4),
            heads=v.get("blend_heads", 8),
            seed=seed,
        ),
        qformer=QFormerConfig(
            hidden_dim=hidden,
            layers=v.get("qformer_layers", 2),
            heads=v.get("qformer_heads", 8),
            n_queries=v.get("n_queries", 8),
            max_text_len=v.get("max_text_len", 160),
            ffn_dim=v.get("ffn_dim", 4 * hidden),
            seed=seed,
        ),
        lm=LMConfig(
            n_layers=v.get("lm_layers", 2),
            hidden_dim=hidden,
            heads=v.get("lm_heads", 4),
            ffn_dim=v.get("lm_ffn_dim", 4 * hidden),
            max_seq_len=v.get("max_seq_len", 512),
            seed=seed,
        ),
        lora=LoRAConfig(
            r=v.get("lora_r", 8), dropout=v.get("lora_dropout", 0.1), seed=seed
        ),
    )
    return MolChatModel(cfg)


def _model_from(args) -> MolChatModel:
    if getattr(args, "checkpoint", None):
        return load_checkpoint(args.checkpoint)
    return _build_model(getattr(args, "model_config", None))


def _train_config(args, stage: str) -> TrainConfig:
    return TrainConfig(
        stage=stage,
        epochs=args.epochs,
        batch_size=args.batch_size,
        peak_lr=args.peak_lr,
        min_lr=args.min_lr,
        warmup_steps=args.warmup_steps,
        weight_decay=args.weight_decay,
        grad_accum_steps=args.grad_accum_steps,
        constant_lr=args.constant_lr,
        max_steps=args.max_steps,
        seed=args.seed,
    )


class _PlaybackModel:
    """Scripted stand-in for a trained model, keyed by molecule id."""

    def __init__(self, rows):
        self.responses = {row["molecule_id"]: row.get("response", "") for row in rows}
        self.continuations = {
            row["molecule_id"]: row.get("continuation", "") for row in rows
        }

    def respond(self, messages, record=None, **kwargs):
        key = record.id if record is not None else None
        if key not in self.responses:
            raise ValueError(f"scripted model has no response for {key!r}")
        return self.responses[key]

    def continue_response(self, messages, partial, record=None, **kwargs):
        key = record.id if record is not None else None
        return self.continuations.get(key, "")


class _PlaybackMcqModel:
    """Scripted multiple-choice answers keyed by the question line."""

    def __init__(self, rows):
        self.responses = {row["question"]: row.get("response", "") for row in rows}

    def respond(self, messages, record=None, **kwargs):
        question = messages[-1].content.splitlines()[0]
        if question not in self.responses:
            raise ValueError(f"scripted model has no response for {question!r}")
        return self.responses[question]


# ---------------------------------------------------------------------------
# command handlers


def _cmd_parse(args) -> None:
    graph = parse_smiles(args.smiles)
    _print(
        {
            "atoms": graph.n_atoms,
            "bonds": graph.n_bonds,
            "formula": graph.heavy_formula(),
            "canonical": write_smiles(graph),
        }
    )


def _cmd_fingerprint(args) -> None:
    graph = parse_smiles(args.smiles)
    fp = morgan_fingerprint(graph, radius=args.radius, n_bits=args.n_bits)
    _print({"n_bits": fp.n_bits, "radius": fp.radius, "on_bits": fp.on_bits()})


def _cmd_select_reps(args) -> None:
    corpus = load_corpus(args.corpus)
    reps = select_representatives(corpus, k=args.k, seed=args.seed)
    if args.out:
        save_corpus(reps, args.out)
        _write_manifest(Path(args.out), args, [args.corpus])
    _print({"k": args.k, "ids": [rec.id for rec in reps]})


def _cmd_datagen(args) -> None:
    corpus = load_corpus(args.corpus)
    client = _client(args)
    result = generate_samples(
        client,
        corpus,
        args.data_type,
        temperature=args.temperature,
        ledger_path=args.ledger,
    )
    _write_jsonl(args.out, [s.to_dict() for s in result.samples])
    _write_manifest(Path(args.out), args, [args.corpus])
    _print(
        {
            "generated": len(result.samples),
            "failures": len(result.failures),
            "failed_ids": [f["molecule_id"] for f in result.failures],
        }
    )


def _cmd_filter(args) -> None:
    samples = [InstructionSample.from_dict(row) for row in _load_jsonl(args.samples)]
    client = _client(args)
    kept, dropped = judge_filter(client, samples)
    _write_jsonl(args.out, [s.to_dict() for s in kept])
    dropped_path = Path(args.out).with_name(Path(args.out).stem + ".dropped.jsonl")
    _write_jsonl(
        dropped_path,
        [{"reason": reason, "sample": s.to_dict()} for s, reason in dropped],
    )
    _write_manifest(Path(args.out), args, [args.samples])
    _print({"kept": len(kept), "dropped": len(dropped), "total": len(samples)})


def _cmd_assemble(args) -> None:
    kept = [InstructionSample.from_dict(row) for row in _load_jsonl(args.samples)]
    counts = assemble_dataset(kept, args.out, seed=args.seed)
    _write_manifest(Path(args.out), args, [args.samples])
    _print(counts)


def _cmd_train_stage1(args) -> None:
    corpus = load_corpus(args.corpus)
    model = _model_from(args)
    cfg = _train_config(args, "stage1")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = run_stage1(model, corpus, cfg, out_dir=out_dir)
    _write_manifest(out_dir, args, [args.corpus, args.model_config])
    _print({"steps": len(metrics), "final_loss": metrics[-1]["loss"]})


def _cmd_train_stage2(args) -> None:
    corpus = load_corpus(args.corpus)
    samples = _load_jsonl(args.dataset)
    model = _model_from(args)
    cfg = _train_config(args, "stage2")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = run_stage2(model, samples, corpus, cfg, out_dir=out_dir)
    _write_manifest(out_dir, args, [args.corpus, args.dataset, args.checkpoint])
    _print({"steps": len(metrics), "final_loss": metrics[-1]["loss"]})


def _cmd_finetune_qa(args) -> None:
    corpus = load_corpus(args.corpus)
    samples = _load_jsonl(args.dataset)
    model = _model_from(args)
    cfg = _train_config(args, "finetune")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = finetune_qa(model, samples, corpus, cfg, out_dir=out_dir)
    _write_manifest(out_dir, args, [args.corpus, args.dataset, args.checkpoint])
    _print({"steps": len(metrics), "final_loss": metrics[-1]["loss"]})


def _cmd_eval_judge(args) -> None:
    corpus = {rec.id: rec for rec in load_corpus(args.corpus)}
    rows_a = {row["molecule_id"]: row["response"] for row in _load_jsonl(args.responses_a)}
    rows_b = {row["molecule_id"]: row["response"] for row in _load_jsonl(args.responses_b)}
    if set(rows_a) != set(rows_b):
        raise ValueError("response files cover different molecule ids")
    missing = set(rows_a) - set(corpus)
    if missing:
        raise ValueError(f"responses reference unknown molecules: {sorted(missing)}")
    client = _client(args)
    items, cand_scores, ref_scores = [], [], []
    for mol_id in sorted(rows_a):
        scores = evaluate_pair(
            client,
            corpus[mol_id],
            args.level,
            rows_a[mol_id],
            rows_b[mol_id],
            repetitions=args.repetitions,
        )
        cand = {key: ab[0] for key, ab in scores.items()}
        ref = {key: ab[1] for key, ab in scores.items()}
        cand_scores.append(cand)
        ref_scores.append(ref)
        items.append(
            {
                "item_id": mol_id,
                "mode": args.level,
                "scores": {"candidate": cand, "reference": ref},
            }
        )
    summary = {
        "relative": relative_score(cand_scores, ref_scores),
        "n_items": len(items),
        "repetitions": args.repetitions,
    }
    _write_jsonl(args.out, items)
    summary_path = Path(args.out).with_name(Path(args.out).stem + ".summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(Path(args.out), args, [args.corpus, args.responses_a, args.responses_b])
    _print(summary)


def _eval_model(args):
    if args.scripted and args.checkpoint:
        raise ValueError("give either --checkpoint or --scripted, not both")
    if args.scripted:
        return _PlaybackModel(_load_jsonl(args.scripted))
    if args.checkpoint:
        return load_checkpoint(args.checkpoint)
    raise ValueError("one of --checkpoint or --scripted is required")


def _cmd_eval_pampa(args) -> None:
    corpus = {rec.id: rec for rec in load_corpus(args.corpus)}
    rows = _load_jsonl(args.items)
    model = _eval_model(args)
    examples = None
    if args.mode == "few_shot":
        if not args.examples:
            raise ValueError("--examples is required for few_shot mode")
        examples = [
            (corpus[row["molecule_id"]], row["label"])
            for row in _load_jsonl(args.examples)
        ]
    items = []
    for row in rows:
        if row["molecule_id"] not in corpus:
            raise ValueError(f"unknown molecule {row['molecule_id']!r}")
        item = PampaItem(record=corpus[row["molecule_id"]], label=row["label"])
        items.append(pampa_predict(model, item, mode=args.mode, examples=examples))
    summary = pampa_metrics(items)
    _write_jsonl(
        args.out,
        [
            {
                "item_id": item.record.id,
                "mode": args.mode,
                "prediction": item.prediction,
                "label": item.label,
                "nonconforming": item.nonconforming,
                "response": item.response_text,
            }
            for item in items
        ],
    )
    summary_path = Path(args.out).with_name(Path(args.out).stem + ".summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(Path(args.out), args, [args.corpus, args.items, args.scripted])
    _print(summary)


def _cmd_eval_mqa(args) -> None:
    corpus = load_corpus(args.corpus)
    rows = _load_jsonl(args.items)
    items = [
        McqItem(
            item_id=row["item_id"],
            category=row["category"],
            question=row["question"],
            options=row["options"],
            answer=row["answer"],
            molecule_id=row.get("molecule_id"),
        )
        for row in rows
    ]
    if args.scripted:
        model = _PlaybackMcqModel(_load_jsonl(args.scripted))
    elif args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    else:
        raise ValueError("one of --checkpoint or --scripted is required")
    report = moleculeqa_eval(model, items, corpus)
    _write_jsonl(
        args.out,
        [
            {
                "item_id": item.item_id,
                "category": item.category,
                "prediction": report["predictions"][item.item_id],
                "answer": item.answer,
                "correct": report["predictions"][item.item_id] == item.answer,
            }
            for item in items
        ],
    )
    summary = {
        "accuracy": report["accuracy"],
        "per_category": report["per_category"],
        "n_items": report["n_items"],
    }
    summary_path = Path(args.out).with_name(Path(args.out).stem + ".summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(Path(args.out), args, [args.corpus, args.items, args.scripted])
    _print(summary)


def _cmd_generate(args) -> None:
    model = load_checkpoint(args.checkpoint)
    record = None
    if args.molecule_id:
        corpus = {rec.id: rec for rec in load_corpus(args.corpus)}
        if args.molecule_id not in corpus:
            raise ValueError(f"unknown molecule {args.molecule_id!r}")
        record = corpus[args.molecule_id]
    messages = []
    if args.system:
        messages.append(ChatMessage("system", args.system))
    messages.append(ChatMessage("user", args.question))
    text = model.respond(
        messages,
        record=record,
        mode=args.mode,
        max_new_tokens=args.max_new_tokens,
        seed=args.seed,
    )
    print(text)


# ---------------------------------------------------------------------------
# parser assembly


def _add_client_flags(sub) -> None:
    sub.add_argument("--provider", default="mock:", help="endpoint URL or mock:")
    sub.add_argument("--model", default="mock-chem", help="provider model name")
    sub.add_argument("--max-parallel", type=int, default=4)
    sub.add_argument("--retries", type=int, default=3)


def _add_train_flags(sub) -> None:
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--epochs", type=int, default=1)
    sub.add_argument("--batch-size", type=int, default=4)
    sub.add_argument("--peak-lr", type=float, default=1e-4)
    sub.add_argument("--min-lr", type=float, default=5e-6)
    sub.add_argument("--warmup-steps", type=int, default=1000)
    sub.add_argument("--weight-decay", type=float, default=0.05)
    sub.add_argument("--grad-accum-steps", type=int, default=1)
    sub.add_argument("--constant-lr", action="store_true")
    sub.add_argument("--max-steps", type=int, default=None)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--model-config", default=None,
                     help="KEY=VALUE file of model dimensions")
    sub.add_argument("--checkpoint", default=None,
                     help="initialize from a saved checkpoint instead")


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="molblend", description=__doc__)
    subcommands = parser.add_subparsers(dest="command", required=True,
                                        parser_class=_Parser)
    registry: dict[str, _Parser] = {}

    def sub(name: str, handler, **kwargs) -> _Parser:
        s = subcommands.add_parser(name, **kwargs)
        s.add_argument("--config", default=None,
                       help="KEY=VALUE defaults (flags override)")
        s.set_defaults(handler=handler)
        registry[name] = s
        return s

    s = sub("parse", _cmd_parse, help="parse a SMILES string")
    s.add_argument("--smiles", required=True)

    s = sub("fingerprint", _cmd_fingerprint, help="Morgan fingerprint on-bits")
    s.add_argument("--smiles", required=True)
    s.add_argument("--radius", type=int, default=2)
    s.add_argument("--n-bits", type=int, default=512)

    s = sub("select-reps", _cmd_select_reps, help="k-means representative molecules")
    s.add_argument("--corpus", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)

    s = sub("datagen", _cmd_datagen, help="generate instruction samples")
    s.add_argument("--corpus", required=True)
    s.add_argument("--data-type", required=True,
                   choices=["structural", "chem_feature", "bio_feature", "conversation"])
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--ledger", default=None)
    s.add_argument("--out", required=True)
    _add_client_flags(s)

    s = sub("filter", _cmd_filter, help="judge-filter generated samples")
    s.add_argument("--samples", required=True)
    s.add_argument("--out", required=True)
    _add_client_flags(s)

    s = sub("assemble", _cmd_assemble, help="assemble the final chat dataset")
    s.add_argument("--samples", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)

    s = sub("train-stage1", _cmd_train_stage1, help="molecule-text alignment")
    s.add_argument("--corpus", required=True)
    _add_train_flags(s)

    s = sub("train-stage2", _cmd_train_stage2, help="instruction tuning")
    s.add_argument("--corpus", required=True)
    s.add_argument("--dataset", required=True)
    _add_train_flags(s)

    s = sub("finetune-qa", _cmd_finetune_qa, help="question-answering fine-tune")
    s.add_argument("--corpus", required=True)
    s.add_argument("--dataset", required=True)
    _add_train_flags(s)

    s = sub("eval-judge", _cmd_eval_judge, help="pairwise response judging")
    s.add_argument("--corpus", required=True)
    s.add_argument("--responses-a", required=True)
    s.add_argument("--responses-b", required=True)
    s.add_argument("--level", required=True,
                   choices=["structural", "chemical", "biological"])
    s.add_argument("--repetitions", type=int, default=1)
    s.add_argument("--out", required=True)
    _add_client_flags(s)

    s = sub("eval-pampa", _cmd_eval_pampa, help="membrane-permeability benchmark")
    s.add_argument("--corpus", required=True)
    s.add_argument("--items", required=True)
    s.add_argument("--mode", default="default",
                   choices=["default", "cot", "task_info", "few_shot"])
    s.add_argument("--examples", default=None,
                   help="labeled examples JSONL for few_shot mode")
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--scripted", default=None,
                   help="canned responses JSONL instead of a checkpoint")
    s.add_argument("--out", required=True)

    s = sub("eval-mqa", _cmd_eval_mqa, help="multiple-choice accuracy")
    s.add_argument("--corpus", required=True)
    s.add_argument("--items", required=True)
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--scripted", default=None)
    s.add_argument("--out", required=True)

    s = sub("generate", _cmd_generate, help="chat with a trained checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--corpus", default=None)
    s.add_argument("--molecule-id", default=None)
    s.add_argument("--system", default=None)
    s.add_argument("--question", required=True)
    s.add_argument("--mode", default="greedy", choices=["greedy", "temperature"])
    s.add_argument("--max-new-tokens", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)

    return parser, registry


def dispatch(argv: list[str]) -> int:
    parser, registry = build_parser()
    try:
        if argv and argv[0] in registry and "--config" in argv:
            config_path = argv[argv.index("--config") + 1]
            registry[argv[0]].set_defaults(
                **_config_defaults(registry[argv[0]], config_path)
            )
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except IndexError:
        print("molblend: error: --config requires a path", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"molblend: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        args.handler(args)
        return EXIT_OK
    except ClientError as exc:
        print(f"molblend: remote failure: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (ParseError, ValueError, KeyError, OSError) as exc:
        print(f"molblend: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
