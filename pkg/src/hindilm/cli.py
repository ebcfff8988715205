"""Command-line entry point.

One executable with subcommands covering the whole pipeline: corpus
cleaning and statistics, tokenizer training and use, parameter counting,
pre-training, perplexity evaluation, fine-tuning, classification
evaluation, generation, and human-eval aggregation.

stdout carries data only; diagnostics go to stderr. Exit codes: 0 ok,
1 usage error, 2 data error, 3 numeric failure. Every run writes a JSON
manifest (resolved configuration, seeds, input digests) next to its
primary output, or to ./<subcommand>.manifest.json for commands that
only print.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bpe import FORMAT_HEADER, TokenizerModel, train_bpe
from .checkpoint import VERSION as CKPT_VERSION
from .checkpoint import load_checkpoint
from .corpus import clean_documents, corpus_stats, read_documents, write_documents
from .errors import DataError, NumericError
from .finetune import (
    TaskSpec,
    aggregate_human_eval,
    eval_classification,
    eval_multiple_choice,
    finetune,
    load_task_data,
)
from .model import PRESETS, ModelConfig, count_params
from .train import TrainConfig, evaluate, pack_corpus, pretrain, tokenizer_digest

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_TASK_KIND_BY_FLAG = {
    "cls": "classification",
    "pair": "pair",
    "mc": "multiple_choice",
    "translate": "translation",
}


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; the contract is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(args, inputs: list[str], output: str | None) -> None:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "subcommand": args.subcommand,
        "config": config,
        "seeds": {k: v for k, v in config.items() if "seed" in k},
        "input_digests": {p: _sha256(p) for p in inputs if Path(p).is_file()},
        "tool_version": __version__,
        "format_versions": {"tokenizer": FORMAT_HEADER, "checkpoint": CKPT_VERSION},
    }
    if output:
        dest = Path(output).with_name(Path(output).name + ".manifest.json")
    else:
        dest = Path(f"{args.subcommand}.manifest.json")
    dest.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def _input_files(spec: str) -> list[str]:
    path = Path(spec)
    if path.is_dir():
        return sorted(str(p) for p in path.rglob("*") if p.is_file())
    return [spec]


def _load_docs(paths: list[str]):
    docs = []
    for p in paths:
        docs.extend(read_documents(p))
    return docs


def _cmd_clean(args) -> int:
    paths = _input_files(args.in_path)
    docs = _load_docs(paths)
    cleaned = clean_documents(docs, min_devanagari=args.min_devanagari, threads=args.threads)
    n = write_documents(cleaned, args.out)
    print(f"kept {n} of {len(docs)} documents", file=sys.stderr)
    _write_manifest(args, paths, args.out)
    return EXIT_OK


def _cmd_stats(args) -> int:
    stats = corpus_stats(args.in_paths)
    print(f"{stats.bytes}\t{stats.words}\t{stats.lines}\t{stats.documents}")
    _write_manifest(args, list(args.in_paths), None)
    return EXIT_OK


def _cmd_tokenizer_train(args) -> int:
    docs = _load_docs(_input_files(args.in_path))
    model = train_bpe(docs, args.vocab)
    model.save(args.out)
    print(f"vocab {model.vocab_size} ({len(model.merges)} merges)", file=sys.stderr)
    _write_manifest(args, _input_files(args.in_path), args.out)
    return EXIT_OK


def _cmd_tokenize(args) -> int:
    model = TokenizerModel.load(args.model)
    print(" ".join(str(i) for i in model.encode(args.text)))
    _write_manifest(args, [args.model], None)
    return EXIT_OK


def _cmd_fertility(args) -> int:
    model = TokenizerModel.load(args.model)
    text = Path(args.in_path).read_text(encoding="utf-8")
    print(f"{model.fertility(text):.4f}")
    _write_manifest(args, [args.model, args.in_path], None)
    return EXIT_OK


def _parse_dims(spec: str) -> ModelConfig:
    parts = spec.split(",")
    if len(parts) != 5:
        raise DataError(f"--dims expects V,d,L,H,n_ctx, got {spec!r}")
    v, d, l, h, n_ctx = (int(p) for p in parts)
    return ModelConfig(vocab_size=v, embed_dim=d, layers=l, heads=h, n_ctx=n_ctx)


def _cmd_count_params(args) -> int:
    if args.preset:
        cfg = PRESETS[args.preset]
    else:
        cfg = _parse_dims(args.dims)
    print(count_params(cfg))
    _write_manifest(args, [], None)
    return EXIT_OK


def _cmd_pretrain(args) -> int:
    tokenizer = TokenizerModel.load(args.tok)
    docs = []
    for spec in args.corpus:
        docs.extend(_load_docs(_input_files(spec)))
    if args.preset:
        cfg = PRESETS[args.preset].with_vocab(tokenizer.vocab_size)
    else:
        cfg = _parse_dims(args.dims)
    window = min(args.window or cfg.n_ctx, cfg.n_ctx)
    train_cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        total_steps=args.steps,
        window=window,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
    )
    _, rows = pretrain(cfg, tokenizer, docs, train_cfg, checkpoint_path=args.out,
                       log=lambda row: print(row, file=sys.stderr))
    log_path = Path(args.out).with_name(Path(args.out).name + ".metrics.tsv")
    log_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    _write_manifest(args, [args.tok], args.out)
    return EXIT_OK


def _cmd_eval_ppl(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    tokenizer = TokenizerModel.load(args.tok)
    if ckpt.tokenizer_digest and ckpt.tokenizer_digest != tokenizer_digest(tokenizer):
        raise DataError("tokenizer does not match the checkpoint's tokenizer digest")
    docs = _load_docs(_input_files(args.in_path))
    examples = pack_corpus(tokenizer, docs, ckpt.config.n_ctx)
    if not examples:
        raise DataError("input is shorter than one context window")
    report = evaluate(ckpt.model(), examples)
    print(f"{report.eval_loss:.6f}\t{report.eval_accuracy:.6f}\t{report.perplexity:.6f}")
    _write_manifest(args, [args.ckpt, args.tok], None)
    return EXIT_OK


def _cmd_finetune(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    tokenizer = TokenizerModel.load(args.tok)
    task = TaskSpec(
        kind=_TASK_KIND_BY_FLAG[args.task],
        num_classes=args.classes,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
    )
    examples = load_task_data(args.train, task)
    model = finetune(ckpt, tokenizer, task, examples)
    from .checkpoint import save_checkpoint

    save_checkpoint(args.out, model, step=ckpt.step, tokenizer_digest=ckpt.tokenizer_digest)
    print(f"fine-tuned on {len(examples)} examples", file=sys.stderr)
    _write_manifest(args, [args.ckpt, args.tok, args.train], args.out)
    return EXIT_OK


def _cmd_eval_cls(args) -> int:
    ckpt = load_checkpoint(args.model)
    tokenizer = TokenizerModel.load(args.tok)
    kind = _TASK_KIND_BY_FLAG[args.task]
    task = TaskSpec(kind=kind, num_classes=args.classes)
    examples = load_task_data(args.test, task)
    model = ckpt.model()
    if kind == "multiple_choice":
        accuracy = eval_multiple_choice(model, tokenizer, examples)
        print(f"accuracy\t{accuracy:.6f}")
    else:
        report = eval_classification(model, tokenizer, examples, task.num_classes)
        print(f"accuracy\t{report.accuracy:.6f}")
        print(f"macro_p/r/f1\t{report.macro_precision:.6f}\t{report.macro_recall:.6f}\t{report.macro_f1:.6f}")
    _write_manifest(args, [args.model, args.tok, args.test], None)
    return EXIT_OK


def _cmd_generate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    tokenizer = TokenizerModel.load(args.tok)
    strategy, temperature, top_k = _parse_strategy(args.strategy)
    text = ckpt.model().generate(
        tokenizer, args.prompt, args.max_new,
        strategy=strategy, temperature=temperature, top_k=top_k, seed=args.seed,
    )
    print(text)
    _write_manifest(args, [args.ckpt, args.tok], None)
    return EXIT_OK


def _parse_strategy(spec: str) -> tuple[str, float, int]:
    if spec == "greedy":
        return "greedy", 1.0, 1
    kind, _, value = spec.partition(":")
    try:
        if kind == "temp":
            return "temperature", float(value), 1
        if kind == "topk":
            return "top_k", 1.0, int(value)
    except ValueError:
        pass
    raise DataError(f"bad strategy {spec!r}; use greedy, temp:<t>, or topk:<k>")


def _cmd_human_eval(args) -> int:
    try:
        lines = Path(args.in_path).read_text(encoding="utf-8").split()
    except OSError as exc:
        raise DataError(f"cannot read {args.in_path}: {exc}") from exc
    try:
        ratings = [int(x) for x in lines]
    except ValueError as exc:
        raise DataError(f"{args.in_path}: {exc}") from exc
    dist = aggregate_human_eval(ratings=ratings)
    for score, frac in zip((4, 3, 2, 1, 0), dist.fractions):
        print(f"score_{score}\t{frac:.6f}")
    print(f"mean\t{dist.mean:.6f}")
    _write_manifest(args, [args.in_path], None)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="hindilm", description=__doc__)
    parser.add_argument(
        "--version", action="version",
        version=f"hindilm {__version__} (tokenizer format {FORMAT_HEADER!r}, checkpoint v{CKPT_VERSION})",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("clean", help="clean a raw corpus")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-devanagari", dest="min_devanagari", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_clean)

    p = sub.add_parser("stats", help="byte/word/line/document counts as TSV")
    p.add_argument("--in", dest="in_paths", nargs="+", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("tokenizer-train", help="train the byte-level BPE tokenizer")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--vocab", type=int, default=50000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tokenizer_train)

    p = sub.add_parser("tokenize", help="print space-separated token ids")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("fertility", help="tokens per word on a text file")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.set_defaults(func=_cmd_fertility)

    p = sub.add_parser("count-params", help="closed-form trainable-parameter count")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=sorted(PRESETS))
    group.add_argument("--dims", help="V,d,L,H,n_ctx")
    p.set_defaults(func=_cmd_count_params)

    p = sub.add_parser("pretrain", help="causal-LM pre-training")
    p.add_argument("--config", dest="preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--dims", default=None, help="V,d,L,H,n_ctx (alternative to --config)")
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--tok", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=100)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("eval-ppl", help="loss/accuracy/perplexity on a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--tok", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.set_defaults(func=_cmd_eval_ppl)

    p = sub.add_parser("finetune", help="supervised fine-tuning from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--tok", required=True)
    p.add_argument("--task", choices=sorted(_TASK_KIND_BY_FLAG), required=True)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--train", required=True)
    p.add_argument("--lr", type=float, default=5e-6)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("eval-cls", help="accuracy and macro P/R/F1 on a test TSV")
    p.add_argument("--model", required=True)
    p.add_argument("--tok", required=True)
    p.add_argument("--task", choices=sorted(_TASK_KIND_BY_FLAG), default="cls")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--test", required=True)
    p.set_defaults(func=_cmd_eval_cls)

    p = sub.add_parser("generate", help="autoregressive text generation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--tok", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--max-new", dest="max_new", type=int, default=32)
    p.add_argument("--strategy", default="greedy", help="greedy | temp:<t> | topk:<k>")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("human-eval", help="aggregate 0..4 quality ratings")
    p.add_argument("--in", dest="in_path", required=True)
    p.set_defaults(func=_cmd_human_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"hindilm: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"hindilm: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"hindilm: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
