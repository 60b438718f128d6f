"""Context-free grammars: the text format, EBNF lowering, and rule-set operations."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)

# Open lexical classes produced by the lexer; any other bare name is a nonterminal.
TERMINAL_CLASSES = ("IDENTIFIER", "NUMBER", "STRING", "NAMED_PARAM")


class GrammarError(ValueError):
    pass


class GrammarSyntaxError(GrammarError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UndefinedNonterminalError(GrammarError):
    def __init__(self, names: Iterable[str]):
        self.names = sorted(names)
        super().__init__("undefined nonterminals: " + ", ".join(self.names))


class SymbolKind(str, Enum):
    LITERAL = "literal"
    CLASS = "class"
    NONTERMINAL = "nonterminal"


@dataclass(frozen=True, order=True)
class Symbol:
    kind: SymbolKind
    text: str

    def __post_init__(self):
        if not self.text:
            raise GrammarError("symbol text must be non-empty")
        if self.kind is SymbolKind.CLASS and self.text not in TERMINAL_CLASSES:
            raise GrammarError(f"unknown terminal class {self.text!r}")

    @classmethod
    def literal(cls, text: str) -> Symbol:
        return cls(SymbolKind.LITERAL, text)

    @classmethod
    def terminal_class(cls, name: str) -> Symbol:
        return cls(SymbolKind.CLASS, name)

    @classmethod
    def nonterminal(cls, name: str) -> Symbol:
        return cls(SymbolKind.NONTERMINAL, name)

    @property
    def is_terminal(self) -> bool:
        return self.kind is not SymbolKind.NONTERMINAL

    def render(self) -> str:
        if self.kind is SymbolKind.LITERAL:
            escaped = self.text.replace("\\", "\\\\").replace('"', '\\"')
            return f'"{escaped}"'
        return self.text

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class RuleAlt:
    """One alternative of a production; an empty rhs is epsilon."""

    lhs: str
    rhs: tuple[Symbol, ...] = ()

    def render(self) -> str:
        return f"{self.lhs}: " + " ".join(s.render() for s in self.rhs)

    def __str__(self) -> str:
        return self.render().rstrip()


@dataclass(frozen=True)
class Grammar:
    start: str | None
    alts: tuple[RuleAlt, ...]
    provenance: Mapping[str, str] = field(default_factory=dict, compare=False, hash=False)
    partial: bool = field(default=False, compare=False)

    @classmethod
    def from_alts(
        cls,
        alts: Iterable[RuleAlt],
        start: str | None = None,
        *,
        partial: bool = True,
        provenance: Mapping[str, str] | None = None,
    ) -> Grammar:
        """Build a grammar, dropping repeated alternatives and keeping first occurrences."""
        seen: set[RuleAlt] = set()
        unique = []
        for alt in alts:
            if alt not in seen:
                seen.add(alt)
                unique.append(alt)
        if start is None and unique:
            start = unique[0].lhs
        prov = dict(provenance or {})
        defined = {a.lhs for a in unique}
        prov = {k: v for k, v in prov.items() if k in defined}
        g = cls(start=start, alts=tuple(unique), provenance=prov, partial=partial)
        if not partial:
            g.require_closed()
        return g

    @cached_property
    def by_lhs(self) -> dict[str, tuple[RuleAlt, ...]]:
        table: dict[str, list[RuleAlt]] = {}
        for alt in self.alts:
            table.setdefault(alt.lhs, []).append(alt)
        return {k: tuple(v) for k, v in table.items()}

    @cached_property
    def alt_set(self) -> frozenset[RuleAlt]:
        return frozenset(self.alts)

    @cached_property
    def index_of(self) -> dict[RuleAlt, int]:
        return {alt: i for i, alt in enumerate(self.alts)}

    @property
    def nonterminals(self) -> set[str]:
        """Defined nonterminals (those with at least one alternative)."""
        return set(self.by_lhs)

    def __len__(self) -> int:
        return len(self.alts)

    def __contains__(self, alt: object) -> bool:
        return alt in self.alt_set

    def __iter__(self):
        return iter(self.alts)

    def is_closed(self) -> bool:
        return not undefined_nonterminals(self) and (self.start is None or self.start in self.by_lhs)

    def require_closed(self) -> None:
        if self.start is None:
            raise GrammarError("grammar has no start symbol")
        missing = set(undefined_nonterminals(self))
        if self.start not in self.by_lhs:
            missing.add(self.start)
        if missing:
            raise UndefinedNonterminalError(missing)

    def without(self, alt: RuleAlt) -> Grammar:
        return Grammar(
            start=self.start,
            alts=tuple(a for a in self.alts if a != alt),
            provenance=self.provenance,
            partial=True,
        )

    def __str__(self) -> str:
        return render_grammar(self)


# ---------------------------------------------------------------------------
# Text format

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>//[^\n]*)
  | (?P<lit>"(?:[^"\\\n]|\\.)*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[:|()?*+])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    value: str
    line: int
    col: int


def _lex_logical(lines: list[tuple[int, str]]) -> list[_Tok]:
    toks: list[_Tok] = []
    for lineno, text in lines:
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                if text[pos] == '"':
                    raise GrammarSyntaxError("unterminated literal", lineno, pos + 1)
                raise GrammarSyntaxError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
            kind = m.lastgroup
            if kind == "lit":
                body = m.group()[1:-1]
                value = re.sub(r"\\(.)", r"\1", body)
                if not value:
                    raise GrammarSyntaxError("empty literal", lineno, pos + 1)
                toks.append(_Tok("lit", value, lineno, pos + 1))
            elif kind in ("name", "op"):
                toks.append(_Tok(kind, m.group(), lineno, pos + 1))
            pos = m.end()
    return toks


def _logical_productions(text: str) -> list[list[tuple[int, str]]]:
    """Group physical lines into productions; indented lines continue the previous one."""
    groups: list[list[tuple[int, str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(line).strip()
        if not stripped:
            continue
        if line[:1] in (" ", "\t") and groups:
            groups[-1].append((lineno, line))
        else:
            groups.append([(lineno, line)])
    return groups


def _strip_comment(line: str) -> str:
    in_lit = False
    i = 0
    while i < len(line):
        c = line[i]
        if in_lit:
            if c == "\\":
                i += 1
            elif c == '"':
                in_lit = False
        elif c == '"':
            in_lit = True
        elif line.startswith("//", i):
            return line[:i]
        i += 1
    return line


# Parsed EBNF expression tree: ("seq", [items]), ("alt", [seqs]), ("sym", Symbol),
# ("opt"|"star"|"plus", expr).


class _ProductionParser:
    def __init__(self, toks: list[_Tok], end: tuple[int, int]):
        self.toks = toks
        self.pos = 0
        self.end = end

    def peek(self) -> _Tok | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def error(self, message: str) -> GrammarSyntaxError:
        tok = self.peek()
        if tok is None:
            return GrammarSyntaxError(message, *self.end)
        return GrammarSyntaxError(message, tok.line, tok.col)

    def production(self) -> tuple[str, list]:
        tok = self.peek()
        if tok is None or tok.kind != "name":
            raise self.error("expected production name")
        if tok.value in TERMINAL_CLASSES:
            raise self.error(f"terminal class {tok.value} cannot be a production name")
        self.pos += 1
        colon = self.peek()
        if colon is None or colon.value != ":" or colon.kind != "op":
            raise self.error("expected ':'")
        self.pos += 1
        alts = self.alternatives()
        if self.peek() is not None:
            raise self.error(f"unexpected {self.peek().value!r}")
        return tok.value, alts

    def alternatives(self) -> list:
        alts = [self.sequence()]
        while (tok := self.peek()) is not None and tok.kind == "op" and tok.value == "|":
            self.pos += 1
            alts.append(self.sequence())
        return alts

    def sequence(self) -> list:
        items = []
        while (tok := self.peek()) is not None:
            if tok.kind == "op" and tok.value in ("|", ")"):
                break
            items.append(self.postfix())
        return items

    def postfix(self):
        expr = self.atom()
        while (tok := self.peek()) is not None and tok.kind == "op" and tok.value in "?*+":
            self.pos += 1
            expr = ({"?": "opt", "*": "star", "+": "plus"}[tok.value], expr)
        return expr

    def atom(self):
        tok = self.peek()
        if tok.kind == "lit":
            self.pos += 1
            return ("sym", Symbol.literal(tok.value))
        if tok.kind == "name":
            self.pos += 1
            if tok.value in TERMINAL_CLASSES:
                return ("sym", Symbol.terminal_class(tok.value))
            return ("sym", Symbol.nonterminal(tok.value))
        if tok.value == "(":
            self.pos += 1
            alts = self.alternatives()
            close = self.peek()
            if close is None or close.value != ")":
                raise self.error("expected ')'")
            self.pos += 1
            return ("group", alts)
        raise self.error(f"unexpected {tok.value!r}")


def _expr_text(expr) -> str:
    tag = expr[0]
    if tag == "sym":
        return expr[1].render()
    if tag == "group":
        return "(" + " | ".join(" ".join(_expr_text(e) for e in seq) for seq in expr[1]) + ")"
    suffix = {"opt": "?", "star": "*", "plus": "+"}[tag]
    return _expr_text(expr[1]) + suffix


class _Lowerer:
    """Rewrites EBNF sugar into plain alternatives with synthesized nonterminals."""

    def __init__(self):
        self.alts: list[RuleAlt] = []
        self.start: str | None = None
        self._pending: list[RuleAlt] = []
        self.provenance: dict[str, str] = {}
        self._counters: dict[tuple[str, str], int] = {}
        self._memo: dict[tuple[str, str], str] = {}

    def fresh(self, base: str, kind: str, source: str) -> tuple[str, bool]:
        key = (base, f"{kind}:{source}")
        if key in self._memo:
            return self._memo[key], False
        n = self._counters.get((base, kind), 0) + 1
        self._counters[(base, kind)] = n
        if kind == "grp":
            name = f"{base}__grp{n}"
        else:
            name = f"{base}__{kind}" if n == 1 else f"{base}__{kind}{n}"
        self._memo[key] = name
        self.provenance[name] = source
        return name, True

    def production(self, lhs: str, alts: list) -> None:
        if self.start is None:
            self.start = lhs
        for seq in alts:
            self.alts.append(RuleAlt(lhs, self.sequence(lhs, seq)))
        # synthesized rules follow the production that introduced them
        self.alts.extend(self._pending)
        self._pending.clear()

    def sequence(self, base: str, seq: list) -> tuple[Symbol, ...]:
        out: list[Symbol] = []
        for expr in seq:
            if expr[0] == "group" and len(expr[1]) == 1:
                # a single-alternative group is just its contents
                out.extend(self.sequence(base, expr[1][0]))
            else:
                out.append(self.item(base, expr))
        return tuple(out)

    def item(self, base: str, expr) -> Symbol:
        tag = expr[0]
        if tag == "sym":
            return expr[1]
        source = _expr_text(expr)
        if tag == "group":
            name, new = self.fresh(base, "grp", source)
            if new:
                for seq in expr[1]:
                    self._pending.append(RuleAlt(name, self.sequence(base, seq)))
            return Symbol.nonterminal(name)
        name, new = self.fresh(base, tag, source)
        if not new:
            return Symbol.nonterminal(name)
        inner = expr[1]
        # Inline the operand's alternatives where that keeps the rule flat.
        if inner[0] == "group":
            bodies = [self.sequence(base, seq) for seq in inner[1]]
        else:
            bodies = [(self.item(base, inner),)]
        nt = Symbol.nonterminal(name)
        if tag == "opt":
            for body in bodies:
                self._pending.append(RuleAlt(name, body))
            self._pending.append(RuleAlt(name, ()))
        else:
            if len(bodies) > 1:
                grp, fresh_grp = self.fresh(base, "grp", _expr_text(inner))
                if fresh_grp:
                    for body in bodies:
                        self._pending.append(RuleAlt(grp, body))
                element: tuple[Symbol, ...] = (Symbol.nonterminal(grp),)
            else:
                element = bodies[0]
            self._pending.append(RuleAlt(name, (nt, *element)))
            self._pending.append(RuleAlt(name, () if tag == "star" else element))
        return nt


def parse_grammar(text: str, partial: bool = False) -> Grammar:
    """Load a grammar from text, lowering EBNF sugar to BNF.

    The first production's name is the start symbol. Repeated identical
    alternatives are dropped with a logged warning. With ``partial=False``
    every nonterminal used on a right-hand side must be defined.
    """
    lowerer = _Lowerer()
    for group in _logical_productions(text):
        toks = _lex_logical([(n, _strip_comment(line)) for n, line in group])
        last_line, last_text = group[-1]
        parser = _ProductionParser(toks, (last_line, len(last_text.rstrip()) + 1))
        lhs, alts = parser.production()
        if lhs in lowerer.provenance:
            raise GrammarSyntaxError(
                f"{lhs!r} collides with a synthesized name", group[0][0], 1
            )
        lowerer.production(lhs, alts)
    return _assemble(lowerer, partial)


def _assemble(lowerer: _Lowerer, partial: bool) -> Grammar:
    seen: set[RuleAlt] = set()
    for alt in lowerer.alts:
        if alt in seen:
            logger.warning("duplicate alternative dropped: %s", alt)
        seen.add(alt)
    return Grammar.from_alts(
        lowerer.alts, start=lowerer.start, partial=partial, provenance=lowerer.provenance
    )


def parse_grammar_lenient(text: str) -> tuple[Grammar, list[str]]:
    """Parse a partial grammar, skipping productions that fail to parse.

    Returns the grammar and one note per skipped production. Intended for
    model-written grammars, where prose and broken lines are common.
    """
    lowerer = _Lowerer()
    notes: list[str] = []
    for group in _logical_productions(text):
        try:
            toks = _lex_logical([(n, _strip_comment(line)) for n, line in group])
            last_line, last_text = group[-1]
            parser = _ProductionParser(toks, (last_line, len(last_text.rstrip()) + 1))
            lhs, alts = parser.production()
        except GrammarError as exc:
            snippet = group[0][1].strip()[:60]
            notes.append(f"dropped {snippet!r}: {exc}")
            continue
        lowerer.production(lhs, alts)
    return _assemble(lowerer, partial=True), notes


def render_grammar(g: Grammar) -> str:
    """Canonical text: one production per lhs in first-appearance order."""
    lines = []
    for lhs, alts in g.by_lhs.items():
        bodies = [" ".join(s.render() for s in alt.rhs) for alt in alts]
        line = f"{lhs}: " + " | ".join(bodies)
        lines.append(line.rstrip())
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Rule-set operations


def undefined_nonterminals(g: Grammar) -> list[str]:
    used = {s.text for alt in g.alts for s in alt.rhs if s.kind is SymbolKind.NONTERMINAL}
    return sorted(used - set(g.by_lhs))


def rules_for(g: Grammar, names: Iterable[str]) -> Grammar:
    names = set(names)
    missing = names - set(g.by_lhs)
    if missing:
        raise GrammarError("no rules for: " + ", ".join(sorted(missing)))
    start = min(names) if names else None
    return Grammar.from_alts(
        (a for a in g.alts if a.lhs in names),
        start=start,
        partial=True,
        provenance=g.provenance,
    )


@dataclass(frozen=True)
class Rejection:
    alt: RuleAlt
    reason: str  # "lhs-unknown" or "alt-not-in-reference"


def validate_subset(candidate: Grammar, reference: Grammar) -> tuple[Grammar, list[Rejection]]:
    """Split candidate alternatives into those present verbatim in reference and the rest."""
    valid = []
    rejected = []
    for alt in candidate.alts:
        if alt in reference:
            valid.append(alt)
        elif alt.lhs not in reference.by_lhs:
            rejected.append(Rejection(alt, "lhs-unknown"))
        else:
            rejected.append(Rejection(alt, "alt-not-in-reference"))
    start = candidate.start if candidate.start in reference.by_lhs else None
    if start is None and valid:
        start = valid[0].lhs
    return (
        Grammar.from_alts(valid, start=start, partial=True, provenance=reference.provenance),
        rejected,
    )


def merge(base: Grammar, addition: Grammar) -> Grammar:
    start = base.start if base.alts else (addition.start or base.start)
    provenance = {**addition.provenance, **base.provenance}
    return Grammar.from_alts(
        [*base.alts, *addition.alts], start=start, partial=True, provenance=provenance
    )
