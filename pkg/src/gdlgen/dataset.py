"""Dataset records, length filtering and demonstration selection."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .earley import EarleyParser
from .grammar import Grammar, GrammarError, parse_grammar
from .lexer import LexError, count_tokens, tokenize


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Example:
    id: str
    category: str
    query: str
    description: str
    grammar: Grammar | None = None


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("gdlgen") / "data" / name))


def load_dataset(path: str | Path) -> list[Example]:
    """Read one JSON record per line; blank lines are skipped."""
    examples = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise DatasetError(f"line {lineno}: expected a JSON object")
            missing = [k for k in ("id", "category", "query", "description") if k not in record]
            if missing:
                raise DatasetError(f"line {lineno}: missing fields {missing}")
            ex_id = str(record["id"])
            if ex_id in seen:
                raise DatasetError(f"line {lineno}: duplicate id {ex_id!r}")
            seen.add(ex_id)
            examples.append(_validated(record, ex_id, lineno))
    return examples


def _validated(record: dict, ex_id: str, lineno: int) -> Example:
    try:
        tokens = tokenize(record["description"])
    except LexError as exc:
        raise DatasetError(f"line {lineno}: example {ex_id!r}: {exc}") from exc
    grammar = None
    if record.get("grammar"):
        try:
            grammar = parse_grammar(record["grammar"])
        except GrammarError as exc:
            raise DatasetError(f"line {lineno}: example {ex_id!r}: bad grammar: {exc}") from exc
        if not EarleyParser(grammar).recognize(tokens):
            raise DatasetError(
                f"line {lineno}: example {ex_id!r}: description not derivable from its grammar"
            )
    return Example(
        id=ex_id,
        category=str(record["category"]),
        query=str(record["query"]),
        description=record["description"],
        grammar=grammar,
    )


def filter_by_length(
    examples: Iterable[Example],
    max_tokens: int = 300,
    counter: Callable[[str], int] = count_tokens,
) -> list[Example]:
    """Keep examples whose description is at most ``max_tokens`` long (inclusive)."""
    if max_tokens < 1:
        raise ValueError("max_tokens must be at least 1")
    return [ex for ex in examples if counter(ex.description) <= max_tokens]


def select_demonstrations(
    pool: Sequence[Example],
    test: Example,
    n: int = 3,
    mode: str = "same",
    seed: int = 0,
) -> list[Example]:
    """Seeded sample of ``n`` demonstrations for ``test``.

    ``same`` draws from the test example's category, ``cross`` from every
    other category.
    """
    others = [ex for ex in pool if ex.id != test.id]
    if mode == "same":
        eligible = [ex for ex in others if ex.category == test.category]
    elif mode == "cross":
        eligible = [ex for ex in others if ex.category != test.category]
    else:
        raise ValueError(f"unknown demonstration mode {mode!r}")
    if len(eligible) < n:
        scope = test.category if mode == "same" else f"outside {test.category}"
        raise DatasetError(
            f"need {n} demonstrations from {scope}, only {len(eligible)} available"
        )
    return random.Random(seed).sample(eligible, n)
