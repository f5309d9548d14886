from .cparser import AstNode, ParseError, RawAst, isomorphic, parse, pretty_print
from .text import (
    DescriptionSequence,
    NoDescription,
    TokenSequence,
    extract_description,
    lex,
    split_identifier,
    tokenize_text,
)

__all__ = [
    "AstNode",
    "DescriptionSequence",
    "NoDescription",
    "ParseError",
    "RawAst",
    "TokenSequence",
    "extract_description",
    "isomorphic",
    "lex",
    "parse",
    "pretty_print",
    "split_identifier",
    "tokenize_text",
]
