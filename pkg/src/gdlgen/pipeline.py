"""Rule decoding, description decoding, and the end-to-end generation methods."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .backends import Backend, BackendError, concretize, random_expand
from .earley import EarleyParser, PrefixAnalysis, productive_nonterminals
from .grammar import (
    Grammar,
    Symbol,
    SymbolKind,
    merge,
    parse_grammar_lenient,
    render_grammar,
    rules_for,
    undefined_nonterminals,
    validate_subset,
)
from .lexer import LexError, TokenStream, detokenize, tokenize
from .minimal import extract_minimal
from .prompts import (
    DEFAULT_TEMPLATE_VERSION,
    DescriptionCompletion,
    DescriptionGeneration,
    Demonstration,
    GenerationRequest,
    RequestKind,
    RuleCompletion,
    TerminalChoice,
    build_prompt,
    extract_continuation,
    extract_description,
    extract_grammar_text,
    extract_terminal,
)

Clock = Callable[[], float]

METHODS = ("gdg", "ggdg", "random")


@dataclass(frozen=True)
class DecodingConfig:
    rule_iter_limit: int = 20
    desc_iter_limit: int = 10
    demo_count: int = 3
    temperature: float = 0.0
    max_desc_tokens: int = 1024
    template_version: str = DEFAULT_TEMPLATE_VERSION
    demo_mode: str = "same"
    prompt_budget: int | None = None  # whitespace-separated words; None disables truncation
    random_depth_limit: int = 8

    def __post_init__(self):
        if self.rule_iter_limit < 1 or self.desc_iter_limit < 1:
            raise ValueError("iteration limits must be at least 1")
        if self.demo_count < 0:
            raise ValueError("demo_count must be non-negative")
        if self.max_desc_tokens < 1:
            raise ValueError("max_desc_tokens must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> DecodingConfig:
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class CallRecord:
    kind: str
    iteration: int
    prompt: str
    response: str | None
    latency: float
    demos_dropped: int = 0
    error: str | None = None


@dataclass
class RuleIteration:
    iteration: int
    grammar_alts: int
    valid: int
    rejected: int
    undefined: list[str]
    latency: float
    notes: list[str] = field(default_factory=list)


@dataclass
class DescriptionIteration:
    iteration: int
    valid_len: int
    candidates: int
    chosen: str | None
    fallback: bool
    description_tokens: int
    latency: float
    notes: list[str] = field(default_factory=list)


@dataclass
class DecodingTrace:
    stage: str
    template_version: str
    iterations: list = field(default_factory=list)
    calls: list[CallRecord] = field(default_factory=list)
    termination: str | None = None
    error: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


class _Caller:
    """Issues backend calls for one stage and records each in the trace."""

    def __init__(self, backend: Backend, cfg: DecodingConfig, trace: DecodingTrace, clock: Clock):
        self.backend = backend
        self.cfg = cfg
        self.trace = trace
        self.clock = clock

    def __call__(self, req: GenerationRequest, iteration: int) -> tuple[str, float]:
        req, dropped = self._fit(req)
        prompt = build_prompt(req, self.cfg.template_version)
        record = CallRecord(req.kind.value, iteration, prompt, None, 0.0, dropped)
        self.trace.calls.append(record)
        t0 = self.clock()
        try:
            response = self.backend.generate(req)
        except BackendError as exc:
            record.latency = self.clock() - t0
            record.error = str(exc)
            raise
        record.latency = self.clock() - t0
        record.response = response
        return response, record.latency

    def _fit(self, req: GenerationRequest) -> tuple[GenerationRequest, int]:
        budget = self.cfg.prompt_budget
        dropped = 0
        if budget is None:
            return req, 0
        while req.demos and len(build_prompt(req, self.cfg.template_version).split()) > budget:
            req = replace(req, demos=req.demos[1:])
            dropped += 1
        return req, dropped


def _required(g: Grammar, start: str) -> set[str]:
    """Names that still need alternatives before ``g`` is usable for stage two.

    These are the undefined names (the start symbol included). Once nothing is
    undefined, they are the reachable names that derive no terminal string.
    """
    names = set(undefined_nonterminals(g))
    if start not in g.by_lhs:
        names.add(start)
    if names:
        return names
    productive = productive_nonterminals(g.alts)
    return _reachable(g, start) - productive


def _reachable(g: Grammar, start: str) -> set[str]:
    seen = {start}
    todo = [start]
    while todo:
        for alt in g.by_lhs.get(todo.pop(), ()):
            for s in alt.rhs:
                if not s.is_terminal and s.text not in seen:
                    seen.add(s.text)
                    todo.append(s.text)
    return seen


def _with_start(g: Grammar, start: str) -> Grammar:
    return Grammar.from_alts(g.alts, start=start, partial=True, provenance=g.provenance)


def close_grammar(g: Grammar, g_full: Grammar) -> Grammar:
    """Pull definitions from ``g_full`` until nothing is undefined."""
    g = _with_start(g, g_full.start)
    while missing := _required(g, g_full.start) & set(g_full.by_lhs):
        grown = _with_start(merge(g, rules_for(g_full, missing)), g_full.start)
        if len(grown) == len(g):
            break
        g = grown
    return Grammar.from_alts(g.alts, start=g_full.start, partial=False, provenance=g.provenance)


def _prune_foreign(g: Grammar, g_full: Grammar, notes: list[str]) -> Grammar:
    """Drop alternatives that use names ``g_full`` cannot define."""
    while True:
        foreign = set(undefined_nonterminals(g)) - g_full.nonterminals
        if not foreign:
            return g
        notes.append("pruned undefined names: " + ", ".join(sorted(foreign)))
        g = Grammar.from_alts(
            [a for a in g.alts if not any(s.text in foreign for s in a.rhs if not s.is_terminal)],
            start=g.start,
            partial=True,
        )


def run_rule_decoding(
    backend: Backend,
    g_full: Grammar,
    demos: Sequence[Demonstration],
    query: str,
    cfg: DecodingConfig = DecodingConfig(),
    clock: Clock = time.perf_counter,
) -> tuple[Grammar, DecodingTrace]:
    """Draft a minimal grammar with the backend and repair it against ``g_full``.

    Each round keeps the drafted alternatives that exist in ``g_full``, finds
    the nonterminals they use but do not define, and asks the backend to pick
    the needed alternatives for those from ``g_full``. Reachable names that
    derive nothing are treated the same way. An answer that adds nothing new is
    replaced by every candidate alternative. After the iteration limit the
    remaining gaps are filled from ``g_full`` wholesale, so the result is
    always closed.
    """
    g_full.require_closed()
    start = g_full.start
    demos = tuple(demos)
    trace = DecodingTrace("rule_decoding", cfg.template_version)
    call = _Caller(backend, cfg, trace, clock)
    valid = Grammar.from_alts([], start=start)
    try:
        response, latency = call(GenerationRequest(RequestKind.GENERATE_GRAMMAR, query, demos), 0)
    except BackendError as exc:
        trace.termination, trace.error = "backend-error", str(exc)
        return close_grammar(valid, g_full), trace
    draft, notes = parse_grammar_lenient(extract_grammar_text(response))
    for iteration in range(cfg.rule_iter_limit + 1):
        valid, rejected = validate_subset(draft, g_full)
        valid = _prune_foreign(_with_start(valid, start), g_full, notes)
        missing = _required(valid, start)
        trace.iterations.append(
            RuleIteration(iteration, len(draft), len(valid), len(rejected), sorted(missing), latency, notes)
        )
        if not missing:
            trace.termination = "converged"
            return Grammar.from_alts(valid.alts, start=start, partial=False), trace
        if iteration == cfg.rule_iter_limit:
            break
        offered = rules_for(g_full, missing)
        req = GenerationRequest(
            RequestKind.COMPLETE_RULES, query, demos, RuleCompletion(valid, offered)
        )
        try:
            response, latency = call(req, iteration + 1)
        except BackendError as exc:
            trace.termination, trace.error = "backend-error", str(exc)
            return close_grammar(valid, g_full), trace
        answer, notes = parse_grammar_lenient(extract_grammar_text(response))
        picked, _ = validate_subset(answer, offered)
        if not set(picked.alts) - valid.alt_set:
            notes.append("no usable new rules in response; taking all candidates")
            picked = offered
        draft = _with_start(merge(valid, picked), start)
    trace.termination = "limit"
    return close_grammar(valid, g_full), trace


def choose_terminal(answer: str, candidates: Sequence[Symbol]) -> tuple[str, bool]:
    """Map a model answer onto the candidate set; returns (terminal text, used_fallback)."""
    for c in candidates:
        if c.kind is SymbolKind.LITERAL and answer == c.text:
            return answer, False
    for c in candidates:
        if c.kind is not SymbolKind.CLASS:
            continue
        if answer == f"<{c.text}>":
            return concretize(c), False
        try:
            toks = tokenize(answer)
        except LexError:
            continue
        if len(toks) == 1 and toks[0].kind == c.text:
            return answer, False
    return concretize(candidates[0]), True


def _cap(text: str, max_tokens: int) -> str:
    try:
        ts = tokenize(text)
    except LexError:
        return text
    if len(ts) <= max_tokens:
        return text
    return detokenize(ts, max_tokens)


def run_description_decoding(
    backend: Backend,
    gy: Grammar,
    demos: Sequence[Demonstration],
    query: str,
    cfg: DecodingConfig = DecodingConfig(),
    clock: Clock = time.perf_counter,
) -> tuple[str, DecodingTrace]:
    """Generate a description and repair it until it parses under ``gy``.

    Each round finds the longest valid prefix, has the backend pick the next
    terminal from the allowed candidates (falling back to the first candidate
    when the pick is not allowed), and has the backend continue from there.
    """
    parser = EarleyParser(gy)
    demos = tuple(demos)
    trace = DecodingTrace("description_decoding", cfg.template_version)
    call = _Caller(backend, cfg, trace, clock)
    try:
        response, latency = call(
            GenerationRequest(
                RequestKind.GENERATE_DESCRIPTION, query, demos, DescriptionGeneration(gy)
            ),
            0,
        )
    except BackendError as exc:
        trace.termination, trace.error = "backend-error", str(exc)
        return "", trace
    current = _cap(extract_description(response), cfg.max_desc_tokens)
    for iteration in range(cfg.desc_iter_limit + 1):
        notes = []
        try:
            ts = tokenize(current)
        except LexError as exc:
            notes.append(f"lex error: {exc}")
            ts = TokenStream((), current)
        pa: PrefixAnalysis = parser.parse_prefix(ts)
        record = DescriptionIteration(
            iteration, pa.valid_len, len(pa.candidates), None, False, len(ts), latency, notes
        )
        trace.iterations.append(record)
        if pa.complete:
            trace.termination = "converged"
            return current, trace
        if iteration == cfg.desc_iter_limit:
            break
        if not pa.candidates:
            # the valid prefix is a full sentence followed by junk
            notes.append("no continuation possible; truncated to the valid prefix")
            current = detokenize(ts, pa.valid_len)
            latency = 0.0
            continue
        valid_text = detokenize(ts, pa.valid_len)
        choice_req = GenerationRequest(
            RequestKind.SELECT_TERMINAL,
            query,
            demos,
            TerminalChoice(gy, valid_text, pa.candidates),
        )
        try:
            answer, t_choice = call(choice_req, iteration + 1)
        except BackendError as exc:
            trace.termination, trace.error = "backend-error", str(exc)
            return current, trace
        omega, fallback = choose_terminal(extract_terminal(answer), pa.candidates)
        record.chosen, record.fallback = omega, fallback
        prefix = f"{valid_text} {omega}".strip()
        completion_req = GenerationRequest(
            RequestKind.COMPLETE_DESCRIPTION, query, demos, DescriptionCompletion(gy, prefix)
        )
        try:
            answer, t_complete = call(completion_req, iteration + 1)
        except BackendError as exc:
            trace.termination, trace.error = "backend-error", str(exc)
            return prefix, trace
        rest = extract_continuation(answer, prefix)
        current = _cap(f"{prefix} {rest}" if rest else prefix, cfg.max_desc_tokens)
        latency = t_choice + t_complete
    trace.termination = "limit"
    return current, trace


# ---------------------------------------------------------------------------
# End-to-end methods


@dataclass
class PipelineResult:
    method: str
    instance_id: str
    description: str
    grammar: Grammar | None
    traces: list[DecodingTrace]
    error: str | None = None
    demo_ids: tuple[str, ...] = ()

    def trace_json(self) -> dict:
        return {
            "method": self.method,
            "instance": self.instance_id,
            "demos": list(self.demo_ids),
            "error": self.error,
            "stages": [t.to_json() for t in self.traces],
        }


def demonstrations(examples, g_full: Grammar | None) -> tuple[Demonstration, ...]:
    """Demonstrations for the prompt; with ``g_full`` each carries its minimal grammar."""
    demos = []
    for ex in examples:
        grammar = None
        if g_full is not None:
            grammar = ex.grammar or extract_minimal(g_full, tokenize(ex.description))
        demos.append(Demonstration(ex.query, ex.description, grammar))
    return tuple(demos)


def run_pipeline(
    method: str,
    backend: Backend,
    g_full: Grammar,
    instance_id: str,
    query: str,
    demo_examples: Sequence,
    cfg: DecodingConfig = DecodingConfig(),
    seed: int = 0,
    clock: Clock = time.perf_counter,
) -> PipelineResult:
    """Run one method on one test query.

    ``gdg`` asks for the description directly with grammar-free
    demonstrations; ``ggdg`` runs rule decoding and then description
    decoding; ``random`` runs rule decoding and then expands the grammar at
    random.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "gdg":
        demos = demonstrations(demo_examples, None)
        trace = DecodingTrace("description_generation", cfg.template_version)
        call = _Caller(backend, cfg, trace, clock)
        req = GenerationRequest(
            RequestKind.GENERATE_DESCRIPTION, query, demos, DescriptionGeneration(None)
        )
        try:
            response, _ = call(req, 0)
        except BackendError as exc:
            trace.termination, trace.error = "backend-error", str(exc)
            return PipelineResult(method, instance_id, "", None, [trace], error="description_generation")
        trace.termination = "single-pass"
        description = _cap(extract_description(response), cfg.max_desc_tokens)
        return PipelineResult(method, instance_id, description, None, [trace])

    demos = demonstrations(demo_examples, g_full)
    gy, rule_trace = run_rule_decoding(backend, g_full, demos, query, cfg, clock)
    if rule_trace.termination == "backend-error":
        return PipelineResult(method, instance_id, "", gy, [rule_trace], error="rule_decoding")
    if method == "random":
        trace = DecodingTrace("random_expansion", cfg.template_version, termination="single-pass")
        description = random_expand(gy, seed, cfg.random_depth_limit)
        return PipelineResult(method, instance_id, description, gy, [rule_trace, trace])
    description, desc_trace = run_description_decoding(backend, gy, demos, query, cfg, clock)
    error = "description_decoding" if desc_trace.termination == "backend-error" else None
    return PipelineResult(method, instance_id, description, gy, [rule_trace, desc_trace], error)


def load_config(path: str | Path) -> tuple[DecodingConfig, dict, dict]:
    """Read a run configuration; returns (decoding config, backend block, raw JSON)."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict) or "backend" not in data:
        raise ValueError(f"{path}: configuration needs a 'backend' block")
    return DecodingConfig.from_dict(data), data["backend"], data


def render_result_grammar(result: PipelineResult) -> str | None:
    return render_grammar(result.grammar) if result.grammar is not None else None
