"""Text-generation backends: HTTP chat client, scripted replay, and the random baseline."""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from pathlib import Path
from typing import Callable

import httpx

from .earley import productive_nonterminals
from .grammar import Grammar, GrammarError, RuleAlt, Symbol, SymbolKind, render_grammar
from .prompts import DEFAULT_TEMPLATE_VERSION, GenerationRequest, RequestKind, build_prompt

logger = logging.getLogger(__name__)

PLACEHOLDERS = {"STRING": '"s"', "NUMBER": "1", "IDENTIFIER": "id", "NAMED_PARAM": "p:"}


class BackendError(RuntimeError):
    """A generation call failed for good (after any retries)."""


def concretize(sym: Symbol) -> str:
    if sym.kind is SymbolKind.CLASS:
        return PLACEHOLDERS[sym.text]
    return sym.text


class Backend:
    """Generation contract shared by every backend."""

    capacity = 1  # parallel in-flight requests the backend tolerates
    deterministic = False

    def generate(self, req: GenerationRequest) -> str:
        raise NotImplementedError


class ScriptedBackend(Backend):
    """Replays canned responses keyed ``"<kind>#<n>"``, n counting calls of that kind.

    A ``"<kind>#*"`` key answers any call of that kind without its own entry.
    """

    deterministic = True

    def __init__(self, responses: dict[str, str]):
        self.responses = dict(responses)
        self.calls: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedBackend:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
            raise ValueError(f"{path}: expected a JSON object of strings")
        return cls(data)

    def generate(self, req: GenerationRequest) -> str:
        kind = req.kind.value
        with self._lock:
            n = self.calls.get(kind, 0)
            self.calls[kind] = n + 1
        for key in (f"{kind}#{n}", f"{kind}#*"):
            if key in self.responses:
                return self.responses[key]
        raise BackendError(f"no scripted response for {kind}#{n}")


class RandomBackend(Backend):
    """Seeded stand-in that answers every request kind without a model.

    Grammar requests get an empty draft, rule completion keeps one random
    alternative per nonterminal, terminal choice is uniform over candidates
    and descriptions are random expansions of the supplied grammar.
    """

    deterministic = True

    def __init__(self, seed: int = 0, depth_limit: int = 8):
        self.seed = seed
        self.depth_limit = depth_limit
        self.rng = random.Random(seed)
        self._lock = threading.Lock()

    def generate(self, req: GenerationRequest) -> str:
        with self._lock:
            ctx = req.context
            if req.kind is RequestKind.COMPLETE_RULES:
                chosen = [self.rng.choice(alts) for alts in ctx.candidates.by_lhs.values()]
                return render_grammar(Grammar.from_alts(chosen))
            if req.kind is RequestKind.SELECT_TERMINAL:
                if not ctx.candidates:
                    return ""
                return concretize(self.rng.choice(ctx.candidates))
            if req.kind is RequestKind.GENERATE_DESCRIPTION and ctx.grammar is not None:
                seed = self.rng.randrange(2**32)
                return random_expand(ctx.grammar, seed, self.depth_limit)
            return ""


class HTTPBackend(Backend):
    """Chat-completions client with bounded exponential backoff."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str | None = None,
        temperature: float = 0.0,
        max_tokens: int = 1024,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        backoff_factor: float = 2.0,
        timeout: float = 120.0,
        max_concurrency: int = 4,
        template_version: str = DEFAULT_TEMPLATE_VERSION,
        sleep: Callable[[float], None] = time.sleep,
        transport: httpx.BaseTransport | None = None,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        self.url = base_url.rstrip("/") + "/v1/chat/completions"
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self.template_version = template_version
        self.capacity = max_concurrency
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise BackendError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def payload(self, req: GenerationRequest) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": build_prompt(req, self.template_version)}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    def generate(self, req: GenerationRequest) -> str:
        body = self.payload(req)
        headers = self._headers()
        last = None
        with self._slots:
            for attempt in range(self.max_attempts):
                if attempt:
                    self._sleep(self.backoff_base * self.backoff_factor ** (attempt - 1))
                try:
                    resp = self._client.post(self.url, json=body, headers=headers)
                except httpx.TransportError as exc:
                    last = f"{type(exc).__name__}: {exc}"
                    logger.warning("attempt %d/%d failed: %s", attempt + 1, self.max_attempts, last)
                    continue
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                    logger.warning("attempt %d/%d failed: %s", attempt + 1, self.max_attempts, last)
                    continue
                if resp.status_code != 200:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    content = resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise BackendError(f"malformed response: {exc!r}") from exc
                return content or ""
        raise BackendError(f"giving up after {self.max_attempts} attempts: {last}")

    def close(self) -> None:
        self._client.close()


def _min_heights(g: Grammar) -> dict[str, int]:
    """Height of the shallowest derivation tree for each productive nonterminal."""
    heights: dict[str, int] = {}
    changed = True
    while changed:
        changed = False
        for alt in g.alts:
            if all(s.is_terminal or s.text in heights for s in alt.rhs):
                h = 1 + max((heights[s.text] for s in alt.rhs if not s.is_terminal), default=0)
                if h < heights.get(alt.lhs, h + 1):
                    heights[alt.lhs] = h
                    changed = True
    return heights


def random_expand(g: Grammar, seed: int, depth_limit: int = 8) -> str:
    """Random sentence of ``g``: uniform choice among alternatives at each expansion.

    From ``depth_limit`` on, only alternatives that move towards termination
    are eligible and the one with the fewest nonterminals wins (lowest index
    on ties). Open token classes become fixed placeholders.
    """
    g.require_closed()
    productive = productive_nonterminals(g.alts)
    if g.start not in productive:
        raise GrammarError("grammar derives no sentence")
    heights = _min_heights(g)
    usable: dict[str, list[RuleAlt]] = {}
    for alt in g.alts:
        if all(s.is_terminal or s.text in productive for s in alt.rhs):
            usable.setdefault(alt.lhs, []).append(alt)
    rng = random.Random(seed)
    out: list[str] = []
    stack: list[tuple[Symbol, int]] = [(Symbol.nonterminal(g.start), 0)]
    while stack:
        sym, depth = stack.pop()
        if sym.is_terminal:
            out.append(concretize(sym))
            continue
        options = usable[sym.text]
        if depth < depth_limit:
            alt = rng.choice(options)
        else:
            bound = heights[sym.text]
            closing = [
                a
                for a in options
                if all(s.is_terminal or heights[s.text] < bound for s in a.rhs)
            ]
            alt = min(closing, key=lambda a: sum(not s.is_terminal for s in a.rhs))
        for s in reversed(alt.rhs):
            stack.append((s, depth + 1))
    return " ".join(out)


def make_backend(spec: dict, template_version: str = DEFAULT_TEMPLATE_VERSION, seed: int | None = None, temperature: float = 0.0) -> Backend:
    """Build a backend from the ``backend`` block of a run configuration."""
    kind = spec.get("type")
    if kind == "scripted":
        return ScriptedBackend.from_file(spec["path"])
    if kind == "random":
        return RandomBackend(
            seed=spec.get("seed", 0) if seed is None else seed,
            depth_limit=spec.get("depth_limit", 8),
        )
    if kind in ("http", "openai", "chat"):
        return HTTPBackend(
            base_url=spec["base_url"],
            model=spec["model"],
            api_key_env=spec.get("api_key_env"),
            temperature=temperature,
            max_tokens=spec.get("max_tokens", 1024),
            max_attempts=spec.get("max_attempts", 3),
            backoff_base=spec.get("backoff_base", 1.0),
            backoff_factor=spec.get("backoff_factor", 2.0),
            timeout=spec.get("timeout", 120.0),
            max_concurrency=spec.get("max_concurrency", 4),
            template_version=template_version,
        )
    raise ValueError(f"unknown backend type {kind!r}")
