"""Evaluation metrics: compilability, functionality hook, ROUGE-L, concept distance, aggregation."""

from __future__ import annotations

import json
import math
import re
import shlex
import statistics
import subprocess
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .earley import EarleyParser
from .grammar import Grammar
from .lexer import LexError, tokenize


@dataclass(frozen=True)
class CheckResult:
    """Outcome of a compile or functionality check; truthy when it passed."""

    passed: bool
    mode: str  # "proxy" or "external"
    error: str | None = None

    def __bool__(self) -> bool:
        return self.passed


def run_hook(cmd: str, text: str, timeout: float = 60.0) -> CheckResult:
    """Run an external checker with ``text`` on stdin: exit 0 passes, 1 fails, anything else is an error."""
    try:
        proc = subprocess.run(
            shlex.split(cmd),
            input=text,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired:
        return CheckResult(False, "external", f"timed out after {timeout}s")
    except OSError as exc:
        return CheckResult(False, "external", f"could not run hook: {exc}")
    if proc.returncode == 0:
        return CheckResult(True, "external")
    if proc.returncode == 1:
        return CheckResult(False, "external")
    detail = proc.stderr.strip().splitlines()[-1:] or [""]
    return CheckResult(False, "external", f"exit {proc.returncode} {detail[0]}".strip())


def compilability(
    g_full: Grammar, text: str, external_cmd: str | None = None, timeout: float = 60.0
) -> CheckResult:
    """Parse-check ``text`` against the full grammar, or defer to an external compiler."""
    if external_cmd:
        return run_hook(external_cmd, text, timeout)
    try:
        tokens = tokenize(text)
    except LexError as exc:
        return CheckResult(False, "proxy", str(exc))
    pa = EarleyParser(g_full).parse_prefix(tokens)
    if pa.complete:
        return CheckResult(True, "proxy")
    if pa.valid_len < len(tokens):
        return CheckResult(False, "proxy", f"unexpected {tokens[pa.valid_len].text!r} at token {pa.valid_len}")
    return CheckResult(False, "proxy", "unexpected end of input")


_FALLBACK_SPLIT = re.compile(r"[(){}]|[^\s(){}]+")


def _rouge_tokens(text: str) -> list[str]:
    try:
        return list(tokenize(text).texts)
    except LexError:
        return _FALLBACK_SPLIT.findall(text)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_f1(reference: str, hypothesis: str) -> float:
    """Sentence-level ROUGE-L F1 over lexer tokens, scaled to 0..100."""
    ref = _rouge_tokens(reference)
    hyp = _rouge_tokens(hypothesis)
    if not ref and not hyp:
        return 100.0
    if not ref or not hyp:
        return 0.0
    lcs = lcs_length(ref, hyp)
    if lcs == 0:
        return 0.0
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    return 100.0 * 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class ConceptVector:
    labels: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.values):
            raise ValueError("labels and values differ in length")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("concept labels must be unique")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("concept values must be finite")

    @classmethod
    def of(cls, values: Sequence[float], labels: Sequence[str] | None = None) -> ConceptVector:
        if labels is None:
            labels = [f"c{i}" for i in range(len(values))]
        return cls(tuple(labels), tuple(float(v) for v in values))

    @classmethod
    def from_file(cls, path: str | Path) -> ConceptVector:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        try:
            return cls.of(data["values"], data["labels"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: expected {{'labels': [...], 'values': [...]}}") from exc


def concept_distance(v1: ConceptVector, v2: ConceptVector) -> float:
    """Cosine distance, clamped to [0, 1]."""
    if v1.labels != v2.labels:
        raise ValueError("concept vectors have different label lists")
    u1, u2 = _unit(v1.values), _unit(v2.values)
    d = 1.0 - math.fsum(x * y for x, y in zip(u1, u2))
    # rounding noise on parallel vectors
    return 0.0 if d < 1e-12 else min(1.0, d)


def _unit(values: Sequence[float]) -> list[float]:
    # pre-scaling by the largest magnitude keeps tiny and huge vectors representable
    peak = max((abs(x) for x in values), default=0.0)
    if peak == 0:
        raise ValueError("cosine distance is undefined for a zero vector")
    scaled = [x / peak for x in values]
    norm = math.hypot(*scaled)
    return [x / norm for x in scaled]


@dataclass(frozen=True)
class InstanceMetrics:
    id: str
    compilable: bool
    functional: bool | None  # None when no functionality hook was available
    rouge_l_f1: float
    ncd: float | None = None
    ncd_raw: float | None = None  # concept distance measured while functionality is unknown
    compile_mode: str = "proxy"
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.functional and not self.compilable:
            raise ValueError(f"{self.id}: functional but not compilable")
        if self.ncd is not None and self.functional is None:
            raise ValueError(f"{self.id}: ncd set while functionality is unknown")
        if not 0.0 <= self.rouge_l_f1 <= 100.0:
            raise ValueError(f"{self.id}: rouge_l_f1 out of range")

    def to_json(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        return d


def score_instance(
    instance_id: str,
    g_full: Grammar,
    reference: str,
    prediction: str,
    compile_cmd: str | None = None,
    functional_cmd: str | None = None,
    concepts: tuple[ConceptVector, ConceptVector] | None = None,
    timeout: float = 60.0,
) -> InstanceMetrics:
    """Score one prediction. Games that fail to compile count as non-functional with distance 1."""
    notes = []
    comp = compilability(g_full, prediction, compile_cmd, timeout)
    if comp.error:
        notes.append(f"compile: {comp.error}")
    if not comp:
        functional: bool | None = False
    elif functional_cmd:
        fun = run_hook(functional_cmd, prediction, timeout)
        if fun.error:
            notes.append(f"functional: {fun.error}")
        functional = fun.passed
    else:
        functional = None
    distance = None
    if concepts is not None and functional is not False:
        try:
            distance = concept_distance(*concepts)
        except ValueError as exc:
            notes.append(f"concepts: {exc}")
    elif concepts is None and functional is not False:
        notes.append("concept vectors missing")
    ncd = ncd_raw = None
    if functional is False:
        ncd = 1.0
    elif functional is None:
        ncd_raw = distance
    else:
        ncd = distance
    return InstanceMetrics(
        id=instance_id,
        compilable=comp.passed,
        functional=functional,
        rouge_l_f1=rouge_l_f1(reference, prediction),
        ncd=ncd,
        ncd_raw=ncd_raw,
        compile_mode=comp.mode,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class MeanStderr:
    mean: float
    stderr: float

    def __str__(self) -> str:
        return f"{self.mean:.1f}±{self.stderr:.1f}"


def mean_stderr(values: Sequence[float]) -> MeanStderr:
    """Mean with standard error (sample standard deviation over sqrt(n))."""
    if not values:
        raise ValueError("need at least one value")
    mean = math.fsum(values) / len(values)
    if len(values) == 1:
        return MeanStderr(mean, 0.0)
    return MeanStderr(mean, statistics.stdev(values) / math.sqrt(len(values)))


@dataclass
class AggregateReport:
    seeds: int
    compilability: MeanStderr
    rouge_l_f1: MeanStderr
    functionality: MeanStderr | None = None
    ncd: MeanStderr | None = None
    ncd_raw: MeanStderr | None = None
    per_seed: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def _seed_summary(rows: Sequence[InstanceMetrics]) -> dict:
    n = len(rows)
    summary = {
        "instances": n,
        "compilability": 100.0 * sum(r.compilable for r in rows) / n,
        "rouge_l_f1": math.fsum(r.rouge_l_f1 for r in rows) / n,
        "functionality": None,
        "ncd": None,
        "ncd_raw": None,
    }
    if all(r.functional is not None for r in rows):
        summary["functionality"] = 100.0 * sum(bool(r.functional) for r in rows) / n
    if all(r.ncd is not None for r in rows):
        summary["ncd"] = math.fsum(r.ncd for r in rows) / n
    raw = [r.ncd_raw for r in rows if r.ncd_raw is not None]
    if raw:
        summary["ncd_raw"] = math.fsum(raw) / len(raw)
    return summary


def aggregate(per_seed: Sequence[Sequence[InstanceMetrics]]) -> AggregateReport:
    """Per-seed means first, then mean and standard error across seeds."""
    if not per_seed or any(not rows for rows in per_seed):
        raise ValueError("need at least one seed, each with at least one instance")
    summaries = [_seed_summary(rows) for rows in per_seed]
    notes = []

    def across(key: str) -> MeanStderr | None:
        values = [s[key] for s in summaries]
        if any(v is None for v in values):
            if any(v is not None for v in values):
                notes.append(f"{key}: missing for some seeds, omitted")
            return None
        return mean_stderr(values)

    report = AggregateReport(
        seeds=len(summaries),
        compilability=across("compilability"),
        rouge_l_f1=across("rouge_l_f1"),
        functionality=across("functionality"),
        ncd=across("ncd"),
        ncd_raw=across("ncd_raw"),
        per_seed=summaries,
        notes=notes,
    )
    if report.functionality is None:
        report.notes.append("functionality unknown (no hook); ncd omitted, ncd_raw reported separately")
    elif report.ncd is None:
        missing = sum(r.ncd is None for rows in per_seed for r in rows)
        report.notes.append(f"ncd omitted: concept vectors missing for {missing} instance(s)")
    return report
