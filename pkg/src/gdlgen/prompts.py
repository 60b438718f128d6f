"""Generation requests, prompt rendering and response extraction."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Sequence

from .grammar import Grammar, Symbol, SymbolKind, render_grammar
from .lexer import LexError, tokenize

DEFAULT_TEMPLATE_VERSION = "v1"


class RequestKind(str, Enum):
    GENERATE_GRAMMAR = "GenerateGrammar"
    COMPLETE_RULES = "CompleteRules"
    GENERATE_DESCRIPTION = "GenerateDescription"
    SELECT_TERMINAL = "SelectTerminal"
    COMPLETE_DESCRIPTION = "CompleteDescription"


@dataclass(frozen=True)
class Demonstration:
    query: str
    description: str
    grammar: Grammar | None = None


@dataclass(frozen=True)
class RuleCompletion:
    valid: Grammar
    candidates: Grammar


@dataclass(frozen=True)
class DescriptionGeneration:
    grammar: Grammar | None  # None for the grammar-free baseline


@dataclass(frozen=True)
class TerminalChoice:
    grammar: Grammar
    prefix: str
    candidates: tuple[Symbol, ...]


@dataclass(frozen=True)
class DescriptionCompletion:
    grammar: Grammar
    prefix: str


_CONTEXT_TYPES = {
    RequestKind.GENERATE_GRAMMAR: type(None),
    RequestKind.COMPLETE_RULES: RuleCompletion,
    RequestKind.GENERATE_DESCRIPTION: DescriptionGeneration,
    RequestKind.SELECT_TERMINAL: TerminalChoice,
    RequestKind.COMPLETE_DESCRIPTION: DescriptionCompletion,
}


@dataclass(frozen=True)
class GenerationRequest:
    kind: RequestKind
    query: str
    demos: tuple[Demonstration, ...] = ()
    context: object = None

    def __post_init__(self):
        expected = _CONTEXT_TYPES[self.kind]
        if not isinstance(self.context, expected):
            raise TypeError(
                f"{self.kind.value} needs {expected.__name__} context, "
                f"got {type(self.context).__name__}"
            )


@lru_cache(maxsize=None)
def _template(version: str, name: str) -> Template:
    path = resources.files("gdlgen") / "templates" / version / f"{name}.txt"
    try:
        return Template(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValueError(f"no template {name!r} for version {version!r}") from None


def template_versions() -> list[str]:
    root = resources.files("gdlgen") / "templates"
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def format_candidate(sym: Symbol) -> str:
    if sym.kind is SymbolKind.LITERAL:
        return sym.text
    return f"<{sym.text}>"


def _demos_section(req: GenerationRequest, version: str, with_grammar: bool) -> str:
    if not req.demos:
        return ""
    blocks = []
    for i, demo in enumerate(req.demos, start=1):
        if with_grammar:
            grammar = render_grammar(demo.grammar) if demo.grammar is not None else ""
            blocks.append(
                _template(version, "demo").substitute(
                    index=i, query=demo.query, grammar=grammar, description=demo.description
                )
            )
        else:
            blocks.append(
                _template(version, "demo_plain").substitute(
                    index=i, query=demo.query, description=demo.description
                )
            )
    return "\n" + "\n".join(blocks)


def build_prompt(req: GenerationRequest, version: str = DEFAULT_TEMPLATE_VERSION) -> str:
    """Render the prompt for a request from the versioned template files."""
    ctx = req.context
    kind = req.kind
    if kind is RequestKind.GENERATE_DESCRIPTION and ctx.grammar is None:
        demos = _demos_section(req, version, with_grammar=False)
        return _template(version, "GenerateDescription_plain").substitute(
            demos=demos, query=req.query
        )
    demos = _demos_section(req, version, with_grammar=True)
    fields = {"demos": demos, "query": req.query}
    if kind is RequestKind.COMPLETE_RULES:
        fields["valid_rules"] = render_grammar(ctx.valid)
        fields["candidate_rules"] = render_grammar(ctx.candidates)
    elif kind is RequestKind.GENERATE_DESCRIPTION:
        fields["grammar"] = render_grammar(ctx.grammar)
    elif kind is RequestKind.SELECT_TERMINAL:
        fields["grammar"] = render_grammar(ctx.grammar)
        fields["prefix"] = ctx.prefix
        fields["candidates"] = "\n".join(
            f"{i}. {format_candidate(c)}" for i, c in enumerate(ctx.candidates, start=1)
        )
    elif kind is RequestKind.COMPLETE_DESCRIPTION:
        fields["grammar"] = render_grammar(ctx.grammar)
        fields["prefix"] = ctx.prefix
    return _template(version, kind.value).substitute(fields)


# ---------------------------------------------------------------------------
# Response extraction

_FENCE = re.compile(r"```[^\n]*\n(.*?)(?:```|\Z)", re.DOTALL)


def _unfence(text: str) -> str:
    m = _FENCE.search(text)
    return m.group(1) if m else text


def extract_grammar_text(response: str) -> str:
    return _unfence(response).strip()


def _balanced_end(text: str, start: int) -> int | None:
    depth = 0
    i = start
    while i < len(text):
        c = text[i]
        if c == '"':
            close = text.find('"', i + 1)
            if close < 0:
                return None
            i = close
        elif c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    return None


def extract_description(response: str) -> str:
    """First parenthesis-balanced s-expression, or the unbalanced tail from the first '('."""
    text = _unfence(response)
    start = text.find("(")
    if start < 0:
        return text.strip()
    end = _balanced_end(text, start)
    return (text[start:end] if end is not None else text[start:]).strip()


def extract_continuation(response: str, prefix: str) -> str:
    """Model continuation with any echoed copy of the prefix removed."""
    text = _unfence(response).strip()
    try:
        got = tokenize(text)
        want = tokenize(prefix).texts
    except LexError:
        return text
    if want and got.texts[: len(want)] == want:
        if len(got) == len(want):
            return ""
        return text[len(text.encode("utf-8")[: got[len(want)].start].decode("utf-8")) :].strip()
    return text


def extract_terminal(response: str) -> str:
    text = _unfence(response)
    for line in text.splitlines():
        line = line.strip().strip("`").strip()
        if not line:
            continue
        try:
            toks = tokenize(line)
        except LexError:
            return line.split()[0]
        if toks:
            return toks[0].text
    return ""


def demos_from(examples: Sequence, with_grammar: bool = True) -> tuple[Demonstration, ...]:
    return tuple(
        Demonstration(
            query=ex.query,
            description=ex.description,
            grammar=ex.grammar if with_grammar else None,
        )
        for ex in examples
    )
