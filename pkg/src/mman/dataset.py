"""Corpus records, multi-modal extraction, and dataset (de)serialisation."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

import numpy as np

from .frontend import (
    NoDescription,
    ParseError,
    extract_description,
    lex,
    parse,
    split_identifier,
    tokenize_text,
)
from .frontend.text import MAX_DESCRIPTION_TOKENS, first_sentence
from .modalities import BinaryAst, Cfg, TooLarge, UnsupportedConstruct, binarize, build_cfg, simplify_cfg

log = logging.getLogger(__name__)

CORPUS_FIELDS = ("id", "code", "description")


class CorpusError(ValueError):
    pass


@dataclass
class CodeRecord:
    id: str
    code: str
    description: str = ""

    def __post_init__(self):
        if not self.id:
            raise CorpusError("record id must be non-empty")
        if not self.code:
            raise CorpusError(f"record {self.id}: code must be non-empty")


@dataclass
class Example:
    """One extracted snippet: the three code modalities plus its description."""

    id: str
    name_tokens: list
    body_tokens: list
    ast: BinaryAst
    cfg: Cfg
    description_tokens: list
    code: str = ""

    @property
    def tokens(self):
        # method-name subtokens lead the token modality
        return self.name_tokens + self.body_tokens

    def to_json(self):
        return {
            "id": self.id,
            "name_tokens": self.name_tokens,
            "body_tokens": self.body_tokens,
            "ast": self.ast.to_json(),
            "cfg": self.cfg.to_json(),
            "description_tokens": self.description_tokens,
            "code": self.code,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            id=obj["id"],
            name_tokens=list(obj["name_tokens"]),
            body_tokens=list(obj["body_tokens"]),
            ast=BinaryAst.from_json(obj["ast"]),
            cfg=Cfg.from_json(obj["cfg"]),
            description_tokens=list(obj["description_tokens"]),
            code=obj.get("code", ""),
        )

    def __eq__(self, other):
        return isinstance(other, Example) and self.to_json() == other.to_json()


_BLOCK_COMMENT = re.compile(r"/\*.*?\*/", re.DOTALL)


def leading_comment(code):
    """Last block comment that precedes the function header, if any."""
    brace = code.find("{")
    head = code if brace < 0 else code[:brace]
    found = _BLOCK_COMMENT.findall(head)
    return found[-1] if found else None


def function_body(code):
    text = _BLOCK_COMMENT.sub(" ", code)
    text = re.sub(r"//[^\n]*", " ", text)
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        return ""
    return text[start + 1 : end]


def description_tokens(record):
    text = record.description.strip()
    if text.startswith("/*"):
        return extract_description(text).tokens
    if text:
        tokens = tokenize_text(first_sentence(text), MAX_DESCRIPTION_TOKENS)
        if tokens:
            return tokens
    comment = leading_comment(record.code)
    if comment is None:
        raise NoDescription(f"record {record.id}: no description")
    return extract_description(comment).tokens


def extract(record, require_description=True):
    """Build the :class:`Example` for ``record``.

    Raises ParseError, UnsupportedConstruct, TooLarge or NoDescription.
    """
    raw = parse(record.code)
    name = raw.function_name
    cfg = simplify_cfg(build_cfg(raw)).indexed()
    try:
        desc = description_tokens(record)
    except NoDescription:
        if require_description:
            raise
        desc = []
    return Example(
        id=record.id,
        name_tokens=split_identifier(name),
        body_tokens=lex(function_body(record.code)).tokens,
        ast=binarize(raw),
        cfg=cfg,
        description_tokens=desc,
        code=record.code,
    )


@dataclass
class ExtractionReport:
    examples: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (id, reason)


SKIPPABLE = (ParseError, UnsupportedConstruct, TooLarge, NoDescription, RecursionError)


def extract_all(records, require_description=True):
    report = ExtractionReport()
    for rec in records:
        try:
            report.examples.append(extract(rec, require_description))
        except SKIPPABLE as exc:
            reason = f"{type(exc).__name__}: {exc}"
            log.warning("skipping record %s: %s", rec.id, reason)
            report.skipped.append((rec.id, reason))
    return report


# ---------------------------------------------------------------------------
# JSON-lines I/O
# ---------------------------------------------------------------------------


def read_corpus(path):
    records, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{n}: invalid JSON ({exc.msg})") from None
            missing = [k for k in ("id", "code") if k not in obj]
            if missing:
                raise CorpusError(f"{path}:{n}: missing field(s) {', '.join(missing)}")
            rec = CodeRecord(str(obj["id"]), obj["code"], obj.get("description") or "")
            if rec.id in seen:
                raise CorpusError(f"{path}:{n}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def write_corpus(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.id, "code": r.code, "description": r.description}) + "\n")


def write_dataset(path, examples):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), sort_keys=True) + "\n")


def read_dataset(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(Example.from_json(json.loads(line)))
                except (KeyError, TypeError, ValueError) as exc:
                    raise CorpusError(f"{path}:{n}: malformed dataset record ({exc})") from None
    return out


def split_examples(examples, eval_ratio=None, eval_count=None, seed=42):
    """Seeded shuffle, then cut off an evaluation part."""
    order = np.random.default_rng(seed).permutation(len(examples))
    if eval_count is None:
        eval_count = int(round(len(examples) * (eval_ratio if eval_ratio is not None else 0.1)))
    eval_count = max(0, min(len(examples), eval_count))
    shuffled = [examples[i] for i in order]
    return shuffled[eval_count:], shuffled[:eval_count]
