"""``mman`` command line: extract, split, train, index, search, eval, inspect-attention."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ConfigError, ModelConfig
from .dataset import (
    SKIPPABLE,
    CorpusError,
    extract_all,
    read_corpus,
    read_dataset,
    split_examples,
    write_corpus,
    write_dataset,
)
from .model import Model, ModelMismatch, Vocabularies, attention_report
from .optim import CheckpointError
from .retrieval import (
    EmptyIndex,
    EmptyQuery,
    EmptyQuerySet,
    FingerprintMismatch,
    IndexFormatError,
    MissingGroundTruth,
    RetrievalIndex,
    build_index,
    check_fingerprint,
    evaluate,
    search,
)
from .synthetic import synthetic_corpus
from .training import CorpusTooSmall, TrainingError, train

log = logging.getLogger("mman")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

DATA_ERRORS = (
    OSError,
    CorpusError,
    ConfigError,
    CheckpointError,
    ModelMismatch,
    IndexFormatError,
    FingerprintMismatch,
    MissingGroundTruth,
    EmptyIndex,
    EmptyQuery,
    EmptyQuerySet,
    CorpusTooSmall,
    TrainingError,
    json.JSONDecodeError,
    *SKIPPABLE,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_examples(path):
    """Extracted dataset, or a raw corpus that is extracted on the fly."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if first.strip() and "ast" in json.loads(first):
        return read_dataset(path)
    report = extract_all(read_corpus(path), require_description=False)
    return report.examples


def _source_lookup(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out[str(obj["id"])] = obj.get("code", "")
    return out


def _load_model(path):
    model, digest = Model.load(path)
    log.info("loaded checkpoint %s (%s)", path, digest[:12])
    return model, digest


def _excerpt(code, lines=3):
    body = [ln.rstrip() for ln in code.strip().splitlines() if ln.strip() and not ln.strip().startswith(("/*", "*"))]
    return body[:lines]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    records = synthetic_corpus(args.count)
    write_corpus(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_extract(args):
    records = read_corpus(args.corpus)
    report = extract_all(records, require_description=not args.allow_missing_description)
    for rid, reason in report.skipped:
        print(f"skipped {rid}: {reason}", file=sys.stderr)
    if not report.examples:
        raise CorpusError(f"{args.corpus}: no record could be extracted")
    write_dataset(args.dataset, report.examples)
    print(f"extracted {len(report.examples)} skipped {len(report.skipped)}")
    return EXIT_OK


def cmd_split(args):
    examples = read_dataset(args.dataset)
    train_part, eval_part = split_examples(examples, args.ratio, args.count, args.seed)
    write_dataset(args.train, train_part)
    write_dataset(args.eval, eval_part)
    print(f"train {len(train_part)} eval {len(eval_part)}")
    return EXIT_OK


def _parse_overrides(pairs):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_train(args):
    overrides = _parse_overrides(args.set)
    if args.epochs is not None:
        overrides["epochs"] = str(args.epochs)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.config:
        config = ModelConfig.load(args.config, overrides)
    else:
        config = ModelConfig.loads("", overrides)
    examples = read_dataset(args.dataset)
    if not examples:
        raise CorpusError(f"{args.dataset}: dataset is empty")
    vocabs = Vocabularies.build(examples, config)
    os.makedirs(args.out, exist_ok=True)
    config.save(os.path.join(args.out, "config.txt"))
    vocabs.code.save(os.path.join(args.out, "code.vocab"))
    vocabs.ast.save(os.path.join(args.out, "ast.vocab"))
    vocabs.desc.save(os.path.join(args.out, "desc.vocab"))
    model = Model(config, vocabs)
    _, stats = train(model, examples, out_dir=args.out)
    last = os.path.join(args.out, f"epoch_{len(stats.epoch_loss):03d}.ckpt")
    print(f"trained {len(stats.epoch_loss)} epochs, final loss {stats.epoch_loss[-1]:.6f}")
    print(f"checkpoint {last}")
    return EXIT_OK


def cmd_index(args):
    model, digest = _load_model(args.checkpoint)
    examples = _read_examples(args.dataset)
    index, failures = build_index(examples, model, digest)
    for rid, reason in failures:
        print(f"skipped {rid}: {reason}", file=sys.stderr)
    index.save(args.out)
    print(f"indexed {len(index)} snippets into {args.out}")
    return EXIT_OK


def _load_index(args, digest):
    index = RetrievalIndex.load(args.index)
    check_fingerprint(index, digest)
    return index


def cmd_search(args):
    model, digest = _load_model(args.checkpoint)
    index = _load_index(args, digest)
    result = search(args.query, index, model, args.k)
    sources = _source_lookup(args.source) if args.source else {}
    for rank, (sid, score) in enumerate(result.hits, 1):
        print(f"{rank:>3}  {score:+.4f}  {sid}")
        for line in _excerpt(sources.get(sid, "")):
            print(f"       | {line}")
    return EXIT_OK


def cmd_eval(args):
    model, digest = _load_model(args.checkpoint)
    index = _load_index(args, digest)
    examples = read_dataset(args.dataset)
    report = evaluate(examples, index, model)
    print(report.table())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return EXIT_OK


def cmd_inspect_attention(args):
    model, _ = _load_model(args.checkpoint)
    if args.code:
        with open(args.code, encoding="utf-8") as fh:
            snippet = fh.read()
    else:
        matches = [ex for ex in _read_examples(args.dataset) if ex.id == args.id]
        if not matches:
            raise MissingGroundTruth(args.id)
        snippet = matches[0]
    for rec in attention_report(snippet, model).records():
        print(json.dumps(rec))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="mman", description="Multi-modal code retrieval over C functions.")
    p.add_argument("--seed", type=int, default=None, help="seed for all randomness (default 42)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write the templated synthetic corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=64)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", help="corpus JSONL -> extracted dataset JSONL")
    s.add_argument("corpus")
    s.add_argument("dataset")
    s.add_argument("--allow-missing-description", action="store_true")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("split", help="seeded train/eval partition of a dataset")
    s.add_argument("dataset")
    s.add_argument("--train", required=True)
    s.add_argument("--eval", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--ratio", type=float, default=None, help="evaluation fraction (default 0.1)")
    g.add_argument("--count", type=int, default=None, help="evaluation size")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train a model; writes per-epoch checkpoints")
    s.add_argument("dataset")
    s.add_argument("--config", help="key=value configuration file")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--epochs", type=int)
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("index", help="encode a dataset or corpus into a retrieval index")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--dataset", required=True, help="extracted dataset or raw corpus JSONL")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("search", help="rank indexed snippets for a query")
    s.add_argument("query")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--index", required=True)
    s.add_argument("-k", type=int, default=10)
    s.add_argument("--source", help="dataset or corpus JSONL used for source excerpts")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("eval", help="R@1/5/10 and MRR of descriptions against the index")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--index", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--json", help="also write the report as JSON")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("inspect-attention", help="attention weight per token, node and vertex (JSONL)")
    s.add_argument("--checkpoint", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--id", help="snippet id inside --dataset")
    g.add_argument("--code", help="file holding one C function")
    s.add_argument("--dataset")
    s.set_defaults(func=cmd_inspect_attention)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "id", None) and not args.dataset:
        parser.error("--id needs --dataset")
    if args.command == "split" and args.seed is None:
        args.seed = 42
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mman: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"mman: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"mman: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
