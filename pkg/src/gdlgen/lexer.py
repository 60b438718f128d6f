"""Tokenizer for s-expression game descriptions."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Sequence

TOKEN_CLASSES = (
    "LPAREN",
    "RPAREN",
    "LBRACE",
    "RBRACE",
    "IDENTIFIER",
    "NUMBER",
    "STRING",
    "NAMED_PARAM",
)

_IDENT_START = rb"A-Za-z_.<>=+\-*/^%!&"
_IDENT_REST = rb"A-Za-z0-9_.<>=+\-*/^%!&"

_SKIP = re.compile(rb"(?:\s+|//[^\n]*)+")
_STRING = re.compile(rb'"(?:[^"\\]|\\.)*"', re.DOTALL)
_NUMBER = re.compile(rb"[+-]?[0-9]+(?:\.[0-9]+)?")
_NAMED_PARAM = re.compile(rb"[A-Za-z_][" + _IDENT_REST + rb"]*:")
_IDENTIFIER = re.compile(rb"[" + _IDENT_START + rb"][" + _IDENT_REST + rb"]*")
_PUNCT = {ord("("): "LPAREN", ord(")"): "RPAREN", ord("{"): "LBRACE", ord("}"): "RBRACE"}


class LexError(ValueError):
    def __init__(self, message: str, start: int, end: int | None = None):
        super().__init__(f"{message} at byte {start}")
        self.start = start
        self.end = start + 1 if end is None else end


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int
    end: int

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class TokenStream(Sequence[Token]):
    tokens: tuple[Token, ...]
    source: str

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]


def tokenize(text: str) -> TokenStream:
    """Split text into tokens by longest match; spans are UTF-8 byte offsets.

    Whitespace and ``//`` line comments are skipped. A number immediately
    followed by an identifier character is rejected, since identifiers may
    not start with a digit.
    """
    data = text.encode("utf-8")
    tokens = []
    pos = 0
    n = len(data)
    while pos < n:
        m = _SKIP.match(data, pos)
        if m:
            pos = m.end()
            continue
        c = data[pos]
        if c in _PUNCT:
            tokens.append(Token(_PUNCT[c], chr(c), pos, pos + 1))
            pos += 1
            continue
        if c == ord('"'):
            m = _STRING.match(data, pos)
            if m is None:
                raise LexError("unterminated string", pos, n)
            tokens.append(Token("STRING", m.group().decode("utf-8"), pos, m.end()))
            pos = m.end()
            continue
        best: tuple[int, str] | None = None
        # Order breaks length ties: a signed number beats an operator identifier.
        for kind, pattern in (
            ("NUMBER", _NUMBER),
            ("NAMED_PARAM", _NAMED_PARAM),
            ("IDENTIFIER", _IDENTIFIER),
        ):
            m = pattern.match(data, pos)
            if m and (best is None or m.end() > best[0]):
                best = (m.end(), kind)
        if best is None:
            raise LexError(f"illegal character {chr(c)!r}" if c < 128 else "illegal character", pos)
        end, kind = best
        if kind == "NUMBER" and end < n and re.match(rb"[A-Za-z_]", data[end : end + 1]):
            raise LexError("identifier cannot begin with a digit", pos, end + 1)
        tokens.append(Token(kind, data[pos:end].decode("ascii"), pos, end))
        pos = end
    return TokenStream(tuple(tokens), text)


def detokenize(ts: Sequence[Token], upto: int | None = None) -> str:
    """Join the first ``upto`` token texts with single spaces."""
    if upto is None:
        upto = len(ts)
    if upto < 0 or upto > len(ts):
        raise ValueError(f"upto={upto} outside 0..{len(ts)}")
    return " ".join(t.text for t in list(ts)[:upto])


def count_tokens(text: str) -> int:
    return len(tokenize(text))
