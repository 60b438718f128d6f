"""Minimal grammars: the smallest rule subset of a grammar that still derives a description."""

from __future__ import annotations

from typing import Sequence

from .earley import EarleyParser, NotASentenceError, derivation_rules
from .grammar import Grammar, RuleAlt
from .lexer import Token


class NotASubsetError(ValueError):
    def __init__(self, alts: Sequence[RuleAlt]):
        self.alts = list(alts)
        super().__init__("alternatives not in the reference grammar: " + "; ".join(map(str, alts)))


def _derives(g: Grammar, tokens: Sequence[Token]) -> bool:
    return EarleyParser(g, allow_partial=True).recognize(tokens)


def extract_minimal(g: Grammar, tokens: Sequence[Token]) -> Grammar:
    """Rules of ``g`` needed for ``tokens``; dropping any one of them breaks the parse.

    Starts from the canonical derivation, then repeatedly tries removing each
    alternative (last first) and keeps the removal whenever the input still
    parses, until a full pass removes nothing.
    """
    used = derivation_rules(g, tokens)
    current = Grammar.from_alts(used.alts, start=g.start, partial=True, provenance=g.provenance)
    changed = True
    while changed:
        changed = False
        for alt in reversed(current.alts):
            trial = current.without(alt)
            if _derives(trial, tokens):
                current = trial
                changed = True
    return Grammar.from_alts(current.alts, start=g.start, partial=False, provenance=g.provenance)


def check_minimality(gy: Grammar, g: Grammar, tokens: Sequence[Token]) -> list[RuleAlt]:
    """Alternatives of ``gy`` that could be removed while still deriving ``tokens``.

    An empty list certifies minimality.
    """
    foreign = [alt for alt in gy.alts if alt not in g]
    if foreign:
        raise NotASubsetError(foreign)
    if not _derives(gy, tokens):
        raise NotASentenceError("description is not derivable from the candidate grammar")
    return [alt for alt in gy.alts if _derives(gy.without(alt), tokens)]
