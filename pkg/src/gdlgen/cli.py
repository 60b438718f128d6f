"""Command-line entry point: ``gdlgen <command> ...``.

Exit codes: 0 success, 1 runtime or backend failure, 2 input or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .backends import Backend, BackendError, RandomBackend, ScriptedBackend, make_backend
from .dataset import DatasetError, Example, bundled_path, filter_by_length, load_dataset, select_demonstrations
from .earley import EarleyParser, NotASentenceError
from .grammar import Grammar, GrammarError, parse_grammar, render_grammar
from .lexer import LexError, tokenize
from .metrics import ConceptVector, aggregate, score_instance
from .minimal import NotASubsetError, check_minimality, extract_minimal
from .pipeline import METHODS, DecodingConfig, PipelineResult, run_pipeline

logger = logging.getLogger("gdlgen")

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2
BUNDLED = "bundled"


class InputError(Exception):
    """Bad command-line input; reported on stderr with exit code 2."""


def _read(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def load_grammar(path: str | Path) -> Grammar:
    if str(path) == BUNDLED:
        path = bundled_path("gdl.grammar")
    try:
        return parse_grammar(_read(path))
    except GrammarError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _tokens(path: str | Path):
    try:
        return tokenize(_read(path))
    except LexError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def cmd_grammar_extract(args) -> int:
    g = load_grammar(args.grammar_path if not args.check else args.full)
    tokens = _tokens(args.description_path)
    if args.check:
        gy = load_grammar(args.grammar_path)
        try:
            removable = check_minimality(gy, g, tokens)
        except (NotASentenceError, NotASubsetError) as exc:
            raise InputError(str(exc)) from exc
        sys.stdout.write(_dump({"removable": [render_grammar(Grammar.from_alts([a])) for a in removable]}))
        return EXIT_OK if not removable else EXIT_RUNTIME
    try:
        gy = extract_minimal(g, tokens)
    except NotASentenceError as exc:
        raise InputError(f"{args.description_path}: {exc}") from exc
    sys.stdout.write(render_grammar(gy) + "\n")
    return EXIT_OK


def cmd_prefix(args) -> int:
    g = load_grammar(args.grammar_path)
    tokens = _tokens(args.description_path)
    sys.stdout.write(_dump(EarleyParser(g).parse_prefix(tokens).to_json()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# generate


def instance_seed(seed: int, instance_id: str) -> int:
    return zlib.crc32(f"{seed}:{instance_id}".encode("utf-8"))


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


class _BackendFactory:
    """One backend per instance for replayable backends, one shared client otherwise."""

    def __init__(self, spec: dict, cfg: DecodingConfig, config_dir: Path):
        self.spec = dict(spec)
        self.cfg = cfg
        kind = self.spec.get("type")
        if kind == "scripted":
            if "path" not in self.spec:
                raise InputError("scripted backend needs a 'path'")
            self.path = _resolve(config_dir, self.spec["path"])
            if not self.path.exists():
                raise InputError(f"scripted responses not found: {self.path}")
            self.shared = None
        elif kind == "random":
            self.shared = None
        else:
            try:
                self.shared = make_backend(self.spec, cfg.template_version, temperature=cfg.temperature)
            except (KeyError, ValueError) as exc:
                raise InputError(f"bad backend block: {exc}") from exc

    @property
    def jobs_cap(self) -> int:
        return self.shared.capacity if self.shared is not None else 1 << 16

    def deterministic(self) -> bool:
        return self.shared is None or self.shared.deterministic

    def for_instance(self, instance_id: str, seed: int) -> Backend:
        if self.shared is not None:
            return self.shared
        if self.spec["type"] == "random":
            return RandomBackend(seed, self.spec.get("depth_limit", 8))
        path = self.path / f"{instance_id}.json" if self.path.is_dir() else self.path
        if not path.exists():
            raise BackendError(f"no scripted responses for instance {instance_id}")
        try:
            return ScriptedBackend.from_file(path)
        except (ValueError, OSError) as exc:
            raise BackendError(str(exc)) from exc


def _run_one(test: Example, pool, method, factory, g_full, cfg, seed, clock) -> PipelineResult:
    iseed = instance_seed(seed, test.id)
    demos = select_demonstrations(pool, test, cfg.demo_count, cfg.demo_mode, iseed)
    try:
        backend = factory.for_instance(test.id, iseed)
    except BackendError as exc:
        return PipelineResult(method, test.id, "", None, [], error=f"backend: {exc}")
    result = run_pipeline(method, backend, g_full, test.id, test.query, demos, cfg, iseed, clock)
    result.demo_ids = tuple(d.id for d in demos)
    return result


def _write_instance(out: Path, result: PipelineResult) -> None:
    d = out / result.instance_id
    d.mkdir(parents=True, exist_ok=True)
    (d / "prediction.txt").write_text(result.description + "\n", encoding="utf-8")
    if result.method != "gdg" and result.grammar is not None:
        (d / "grammar.txt").write_text(render_grammar(result.grammar) + "\n", encoding="utf-8")
    (d / "trace.json").write_text(_dump(result.trace_json()), encoding="utf-8")


def _describe_error(result: PipelineResult) -> str | None:
    if not result.error:
        return None
    detail = next((t.error for t in result.traces if t.stage == result.error and t.error), None)
    return f"{result.error}: {detail}" if detail else result.error


def cmd_generate(args) -> int:
    config_path = Path(args.config_path)
    try:
        raw = json.loads(_read(config_path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{config_path}: malformed JSON: {exc.msg}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("backend"), dict):
        raise InputError(f"{config_path}: configuration needs a 'backend' object")
    try:
        cfg = DecodingConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{config_path}: {exc}") from exc
    grammar_ref = raw.get("grammar", BUNDLED)
    if grammar_ref != BUNDLED:
        grammar_ref = str(_resolve(config_path.parent, grammar_ref))
    g_full = load_grammar(grammar_ref)
    try:
        examples = load_dataset(args.dataset_path)
    except (DatasetError, OSError) as exc:
        raise InputError(str(exc)) from exc
    tests = filter_by_length(examples, raw.get("max_tokens", 300))
    if args.limit is not None:
        tests = tests[: args.limit]
    factory = _BackendFactory(raw["backend"], cfg, config_path.parent)
    # wall-clock latencies would make replayable runs differ byte for byte
    clock = (lambda: 0.0) if factory.deterministic() else time.perf_counter

    def job(test: Example) -> PipelineResult:
        return _run_one(test, examples, args.method, factory, g_full, cfg, args.seed, clock)

    # select demonstrations up front so pool errors surface as input errors
    for test in tests:
        try:
            select_demonstrations(examples, test, cfg.demo_count, cfg.demo_mode, 0)
        except DatasetError as exc:
            raise InputError(f"{test.id}: {exc}") from exc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = max(1, min(args.jobs, factory.jobs_cap))
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(job, tests))
    for result in results:
        _write_instance(out, result)
    run_info = {
        "method": args.method,
        "seed": args.seed,
        "template_version": cfg.template_version,
        "grammar": str(grammar_ref),
        "config": raw,
        "instances": [t.id for t in tests],
    }
    (out / "run.json").write_text(_dump(run_info), encoding="utf-8")
    summary = {
        r.instance_id: {
            "error": _describe_error(r),
            "stages": {t.stage: t.termination for t in r.traces},
        }
        for r in results
    }
    (out / "summary.json").write_text(_dump(summary), encoding="utf-8")
    failed = [r.instance_id for r in results if r.error]
    for instance_id in failed:
        print(f"error: {instance_id}: {summary[instance_id]['error']}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def _concepts_for(concepts_dir: Path | None, run_dir: Path, instance_id: str):
    if concepts_dir is None:
        return None
    reference = concepts_dir / f"{instance_id}.reference.json"
    predicted = run_dir / instance_id / "concepts.json"
    if not predicted.exists():
        predicted = concepts_dir / f"{instance_id}.predicted.json"
    if not (reference.exists() and predicted.exists()):
        return None
    try:
        return ConceptVector.from_file(reference), ConceptVector.from_file(predicted)
    except (ValueError, OSError) as exc:
        raise InputError(str(exc)) from exc


def _score_run(run_dir: Path, refs: dict[str, Example], args) -> list:
    try:
        run_info = json.loads(_read(run_dir / "run.json"))
        summary = json.loads(_read(run_dir / "summary.json"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{run_dir}: not a generation run ({exc.msg})") from exc
    if not isinstance(summary, dict) or not isinstance(run_info, dict):
        raise InputError(f"{run_dir}: not a generation run")
    grammar_ref = args.grammar or run_info.get("grammar", BUNDLED)
    g_full = load_grammar(grammar_ref)
    concepts_dir = Path(args.concepts) if args.concepts else None
    rows = []
    for instance_id in sorted(summary):
        if instance_id not in refs:
            raise InputError(f"{run_dir}: instance {instance_id!r} is not in the dataset")
        prediction = _read(run_dir / instance_id / "prediction.txt").rstrip("\n")
        rows.append(
            score_instance(
                instance_id,
                g_full,
                refs[instance_id].description,
                prediction,
                compile_cmd=args.compile_cmd,
                functional_cmd=args.functional_cmd,
                concepts=_concepts_for(concepts_dir, run_dir, instance_id),
                timeout=args.timeout,
            )
        )
    if not rows:
        raise InputError(f"{run_dir}: run has no instances")
    return rows


def cmd_evaluate(args) -> int:
    try:
        refs = {ex.id: ex for ex in load_dataset(args.dataset_path)}
    except (DatasetError, OSError) as exc:
        raise InputError(str(exc)) from exc
    run_dirs = [Path(args.run_dir)] + [Path(p) for p in args.seed_runs]
    per_seed = [_score_run(d, refs, args) for d in run_dirs]
    report = {
        "runs": [
            {"run_dir": str(d), "rows": [r.to_json() for r in rows]}
            for d, rows in zip(run_dirs, per_seed)
        ],
        "aggregate": aggregate(per_seed).to_json(),
    }
    text = _dump(report)
    (run_dirs[0] / "metrics.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdlgen", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grammar-extract", help="print the minimal grammar of a description")
    p.add_argument("grammar_path", help=f"grammar file ('{BUNDLED}' for the shipped grammar)")
    p.add_argument("description_path")
    p.add_argument(
        "--check",
        action="store_true",
        help="treat grammar_path as a candidate minimal grammar and list removable rules",
    )
    p.add_argument("--full", default=BUNDLED, help="full grammar used by --check")
    p.set_defaults(func=cmd_grammar_extract)

    p = sub.add_parser("prefix", help="longest valid prefix and next-terminal candidates as JSON")
    p.add_argument("grammar_path")
    p.add_argument("description_path")
    p.set_defaults(func=cmd_prefix)

    p = sub.add_parser("generate", help="run a generation method over a dataset")
    p.add_argument("config_path")
    p.add_argument("dataset_path")
    p.add_argument("--method", choices=METHODS, default="ggdg")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="instances run concurrently")
    p.add_argument("--limit", type=int, default=None, help="only the first N instances")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score a generation run against the dataset")
    p.add_argument("run_dir")
    p.add_argument("dataset_path")
    p.add_argument("--seed-runs", nargs="*", default=[], help="further runs of other seeds")
    p.add_argument("--concepts", help="directory of <id>.reference.json / <id>.predicted.json")
    p.add_argument("--functional-cmd", help="playability hook; description on stdin")
    p.add_argument("--compile-cmd", help="compiler hook replacing the grammar parse check")
    p.add_argument("--grammar", help="full grammar for the parse check (default: the run's)")
    p.add_argument("--timeout", type=float, default=60.0, help="seconds per hook call")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
