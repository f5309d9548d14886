"""Token, method-name, and description extraction."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

MAX_BODY_TOKENS = 100
MAX_NAME_TOKENS = 50
MAX_DESCRIPTION_TOKENS = 30

# braces split tokens so they never reach the vocabulary
DELIMITERS = '.,";)(!{}'
_DELIM_RE = re.compile(r'[.,";)(!{}\s]+')
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_WORD_RE = re.compile(r"[A-Za-z0-9]+")


class NoDescription(ValueError):
    pass


@dataclass
class TokenSequence:
    tokens: list = field(default_factory=list)
    truncated: bool = False

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass
class DescriptionSequence:
    tokens: list = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def lex(source_text, limit=MAX_BODY_TOKENS):
    """Split on the delimiter set and whitespace, lowercase, cap at ``limit``."""
    tokens = [t.lower() for t in _DELIM_RE.split(source_text) if t]
    if len(tokens) > limit:
        return TokenSequence(tokens[:limit], truncated=True)
    return TokenSequence(tokens, truncated=False)


def split_identifier(name, limit=MAX_NAME_TOKENS):
    """``getMaxValue`` -> ``["get", "max", "value"]``; ``print_message`` -> ``["print", "message"]``."""
    parts = []
    for chunk in name.split("_"):
        if chunk:
            parts.extend(p.lower() for p in _CAMEL_RE.split(chunk) if p)
    return parts[:limit]


def _strip_comment(comment_block):
    text = comment_block.strip()
    if text.startswith("/*"):
        text = text[2:]
    if text.endswith("*/"):
        text = text[:-2]
    lines = []
    for line in text.splitlines():
        line = line.strip()
        line = line.lstrip("*").strip()
        if line.startswith("//"):
            line = line[2:].strip()
        lines.append(line)
    return " ".join(l for l in lines if l)


def first_sentence(text):
    m = re.search(r"\.(\s|$)", text)
    return text[: m.start()] if m else text


def tokenize_text(text, limit=MAX_DESCRIPTION_TOKENS):
    """Lowercased alphanumeric words of free text (used for queries too)."""
    return [w.lower() for w in _WORD_RE.findall(text)][:limit]


def extract_description(comment_block, limit=MAX_DESCRIPTION_TOKENS):
    body = _strip_comment(comment_block)
    tokens = tokenize_text(first_sentence(body), limit)
    if not tokens:
        raise NoDescription("comment block is empty after stripping")
    return DescriptionSequence(tokens)
