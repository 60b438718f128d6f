"""Earley recognition with longest-valid-prefix recovery and derivation extraction."""

from __future__ import annotations

import sys
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Sequence

from .grammar import Grammar, RuleAlt, Symbol, SymbolKind
from .lexer import Token


class NotASentenceError(ValueError):
    pass


@dataclass(frozen=True)
class PrefixAnalysis:
    status: str  # "complete" or "prefix"
    valid_len: int
    candidates: tuple[Symbol, ...]

    @property
    def complete(self) -> bool:
        return self.status == "complete"

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "valid_len": self.valid_len,
            "candidates": [{"kind": c.kind.value, "text": c.text} for c in self.candidates],
        }


@dataclass(frozen=True)
class DerivationUse:
    """Alternatives used by one complete derivation, in grammar order."""

    alts: tuple[RuleAlt, ...]
    start: str

    def as_grammar(self) -> Grammar:
        return Grammar.from_alts(self.alts, start=self.start, partial=True)


def matches(sym: Symbol, tok: Token) -> bool:
    if sym.kind is SymbolKind.LITERAL:
        return tok.text == sym.text
    return tok.kind == sym.text


def candidate_order(sym: Symbol) -> tuple[int, str]:
    return (0 if sym.kind is SymbolKind.LITERAL else 1, sym.text)


def productive_nonterminals(alts: Sequence[RuleAlt]) -> set[str]:
    productive: set[str] = set()
    changed = True
    while changed:
        changed = False
        for alt in alts:
            if alt.lhs in productive:
                continue
            if all(s.is_terminal or s.text in productive for s in alt.rhs):
                productive.add(alt.lhs)
                changed = True
    return productive


def nullable_nonterminals(alts: Sequence[RuleAlt]) -> set[str]:
    nullable: set[str] = set()
    changed = True
    while changed:
        changed = False
        for alt in alts:
            if alt.lhs not in nullable and all(
                not s.is_terminal and s.text in nullable for s in alt.rhs
            ):
                nullable.add(alt.lhs)
                changed = True
    return nullable


class _Column:
    __slots__ = ("items", "agenda", "waiting", "scans", "predicted")

    def __init__(self):
        self.items: set[tuple[int, int, int]] = set()
        self.agenda: list[tuple[int, int, int]] = []
        self.waiting: dict[str, list[tuple[int, int, int]]] = {}
        self.scans: list[tuple[int, int, int]] = []
        self.predicted: set[str] = set()

    def add(self, item: tuple[int, int, int]) -> None:
        if item not in self.items:
            self.items.add(item)
            self.agenda.append(item)


class EarleyParser:
    """Chart parser over a fixed grammar.

    Alternatives that mention unproductive nonterminals are ignored, so every
    item in the chart lies on some complete derivation; this is what makes the
    last non-empty column the longest viable prefix. With ``allow_partial``
    undefined nonterminals simply derive nothing.
    """

    def __init__(self, g: Grammar, allow_partial: bool = False):
        if not allow_partial:
            g.require_closed()
        self.grammar = g
        productive = productive_nonterminals(g.alts)
        self.alt_ids = [
            i
            for i, alt in enumerate(g.alts)
            if alt.lhs in productive
            and all(s.is_terminal or s.text in productive for s in alt.rhs)
        ]
        self.alts = g.alts
        self.by_lhs: dict[str, list[int]] = {}
        for i in self.alt_ids:
            self.by_lhs.setdefault(g.alts[i].lhs, []).append(i)
        self.nullable = nullable_nonterminals([g.alts[i] for i in self.alt_ids])
        self.start = g.start

    def chart(self, tokens: Sequence[Token]) -> list[_Column]:
        """Build columns until the input is consumed or a column comes up empty."""
        alts = self.alts
        first = _Column()
        if self.start in self.by_lhs:
            first.predicted.add(self.start)
            for a in self.by_lhs[self.start]:
                first.add((a, 0, 0))
        columns = [first]
        for k in range(len(tokens) + 1):
            col = columns[k]
            agenda = col.agenda
            while agenda:
                item = agenda.pop()
                a, d, o = item
                rhs = alts[a].rhs
                if d == len(rhs):
                    lhs = alts[a].lhs
                    for a2, d2, o2 in list(columns[o].waiting.get(lhs, ())):
                        col.add((a2, d2 + 1, o2))
                    continue
                sym = rhs[d]
                if sym.kind is SymbolKind.NONTERMINAL:
                    name = sym.text
                    col.waiting.setdefault(name, []).append(item)
                    if name not in col.predicted:
                        col.predicted.add(name)
                        for b in self.by_lhs.get(name, ()):
                            col.add((b, 0, k))
                    if name in self.nullable:
                        col.add((a, d + 1, o))
                else:
                    col.scans.append(item)
            if k == len(tokens):
                break
            tok = tokens[k]
            nxt = _Column()
            for a, d, o in col.scans:
                if matches(alts[a].rhs[d], tok):
                    nxt.add((a, d + 1, o))
            if not nxt.items:
                break
            columns.append(nxt)
        return columns

    def _accepted(self, columns: list[_Column], n: int) -> bool:
        if len(columns) != n + 1:
            return False
        return any(
            (a, len(self.alts[a].rhs), 0) in columns[n].items
            for a in self.by_lhs.get(self.start, ())
        )

    def recognize(self, tokens: Sequence[Token]) -> bool:
        return self._accepted(self.chart(tokens), len(tokens))

    def parse_prefix(self, tokens: Sequence[Token]) -> PrefixAnalysis:
        columns = self.chart(tokens)
        if not columns[0].items:
            return PrefixAnalysis("prefix", 0, ())
        valid_len = len(columns) - 1
        last = columns[valid_len]
        expected = {self.alts[a].rhs[d] for a, d, _ in last.scans}
        candidates = tuple(sorted(expected, key=candidate_order))
        status = "complete" if self._accepted(columns, len(tokens)) else "prefix"
        return PrefixAnalysis(status, valid_len, candidates)

    def derivation(self, tokens: Sequence[Token]) -> list[int]:
        """Alt ids of the canonical derivation, in preorder.

        Among derivations, the one whose preorder sequence of alternative
        indices is lexicographically smallest is chosen: at each expansion the
        lowest-index alternative that still admits a parse wins, leftmost
        first. A (nonterminal, span) pair already being expanded is not
        re-entered, which cuts unit and epsilon cycles.
        """
        n = len(tokens)
        columns = self.chart(tokens)
        if not self._accepted(columns, n):
            raise NotASentenceError("input is not a sentence of the grammar")
        alts = self.alts
        done_alt: dict[tuple[int, int], set[int]] = {}
        spans: dict[tuple[str, int], set[int]] = {}
        for k, col in enumerate(columns):
            for a, d, o in col.items:
                if d == len(alts[a].rhs):
                    done_alt.setdefault((a, o), set()).add(k)
                    spans.setdefault((alts[a].lhs, o), set()).add(k)

        best_memo: dict[tuple[str, int, int], list[int] | None] = {}
        seq_memo: dict[tuple[int, int, int, int], list[int] | None] = {}
        active: set[tuple[str, int, int]] = set()
        # Failures caused by the cycle cut depend on the caller's path and must not be memoized.
        cuts = [0]

        def best(name: str, i: int, j: int) -> list[int] | None:
            key = (name, i, j)
            if key in best_memo:
                return best_memo[key]
            if key in active:
                cuts[0] += 1
                return None
            before = cuts[0]
            active.add(key)
            result = None
            for a in self.by_lhs.get(name, ()):
                if j in done_alt.get((a, i), ()):
                    rest = seq(a, 0, i, j)
                    if rest is not None:
                        result = [a, *rest]
                        break
            active.discard(key)
            if result is not None or cuts[0] == before:
                best_memo[key] = result
            return result

        def seq(a: int, d: int, i: int, j: int) -> list[int] | None:
            key = (a, d, i, j)
            if key in seq_memo:
                return seq_memo[key]
            before = cuts[0]
            rhs = alts[a].rhs
            result = None
            if d == len(rhs):
                result = [] if i == j else None
            elif rhs[d].is_terminal:
                if i < j and matches(rhs[d], tokens[i]):
                    result = seq(a, d + 1, i + 1, j)
            else:
                choice = None
                for e in sorted(spans.get((rhs[d].text, i), ())):
                    if e > j:
                        break
                    rest = seq(a, d + 1, e, j)
                    if rest is None:
                        continue
                    head = best(rhs[d].text, i, e)
                    if head is not None and (choice is None or head < choice[0]):
                        choice = (head, rest)
                if choice is not None:
                    result = choice[0] + choice[1]
            if result is not None or cuts[0] == before:
                seq_memo[key] = result
            return result

        with _recursion_limit(20_000 + 50 * n):
            result = best(self.start, 0, n)
        if result is None:
            raise NotASentenceError("no cycle-free derivation found")
        return result


@contextmanager
def _recursion_limit(limit: int):
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, limit))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


def recognize(g: Grammar, tokens: Sequence[Token]) -> bool:
    """Membership test; ``g`` must be closed."""
    return EarleyParser(g).recognize(tokens)


def parse_prefix(g: Grammar, tokens: Sequence[Token]) -> PrefixAnalysis:
    """Longest prefix of ``tokens`` that some sentence of ``g`` extends, plus what may follow it."""
    return EarleyParser(g).parse_prefix(tokens)


def derivation_rules(g: Grammar, tokens: Sequence[Token]) -> DerivationUse:
    parser = EarleyParser(g)
    ids = set(parser.derivation(tokens))
    return DerivationUse(tuple(g.alts[i] for i in sorted(ids)), g.start)
