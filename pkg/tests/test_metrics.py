from __future__ import annotations

import itertools
import json
import math
import random
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gdlgen.metrics import (
    ConceptVector,
    InstanceMetrics,
    aggregate,
    compilability,
    concept_distance,
    lcs_length,
    mean_stderr,
    rouge_l_f1,
    score_instance,
)

PY = sys.executable
words = st.lists(st.sampled_from(["a", "b", "c", "(", ")"]), max_size=7)


def brute_lcs(x, y):
    """Longest common subsequence by trying every subsequence of the shorter side."""
    if len(x) > len(y):
        x, y = y, x
    for size in range(len(x), 0, -1):
        for idx in itertools.combinations(range(len(x)), size):
            sub = [x[i] for i in idx]
            it = iter(y)
            if all(tok in it for tok in sub):
                return size
    return 0


def test_rouge_examples():
    assert rouge_l_f1("a b c", "a c") == 80.0
    assert rouge_l_f1("(game x)", "(game x)") == 100.0
    assert rouge_l_f1("a b", "c d") == 0.0
    assert rouge_l_f1("", "") == 100.0
    assert rouge_l_f1("a", "") == 0.0 and rouge_l_f1("", "a") == 0.0


def test_rouge_uses_lexer_tokens():
    assert rouge_l_f1("(game)", "( game )") == 100.0


def test_rouge_survives_unlexable_text():
    assert rouge_l_f1('(game "open', '(game "open') == 100.0


@given(words, words)
def test_lcs_matches_brute_force(x, y):
    assert lcs_length(x, y) == brute_lcs(x, y)


@given(words, words)
def test_rouge_range_and_formula(x, y):
    ref, hyp = " ".join(x), " ".join(y)
    value = rouge_l_f1(ref, hyp)
    assert 0.0 <= value <= 100.0
    lcs = brute_lcs(x, y)
    if x and y and lcs:
        p, r = lcs / len(y), lcs / len(x)
        assert value == pytest.approx(100 * 2 * p * r / (p + r))
    if x:
        assert rouge_l_f1(ref, ref) == 100.0


def test_concept_distance_examples():
    v = ConceptVector.of([1, 0])
    assert concept_distance(v, v) == 0.0
    assert concept_distance(v, ConceptVector.of([0, 1])) == 1.0
    assert abs(concept_distance(v, ConceptVector.of([1, 1])) - (1 - 1 / math.sqrt(2))) < 1e-9


def test_concept_distance_errors():
    with pytest.raises(ValueError, match="zero"):
        concept_distance(ConceptVector.of([0, 0]), ConceptVector.of([1, 0]))
    with pytest.raises(ValueError, match="label"):
        concept_distance(ConceptVector.of([1], ["x"]), ConceptVector.of([1], ["y"]))
    with pytest.raises(ValueError):
        ConceptVector.of([math.inf])
    with pytest.raises(ValueError):
        ConceptVector.of([1, 2], ["x", "x"])


def test_concept_vector_file(tmp_path):
    path = tmp_path / "v.json"
    path.write_text(json.dumps({"labels": ["Line", "Stack"], "values": [1, 0.5]}))
    v = ConceptVector.from_file(path)
    assert v.labels == ("Line", "Stack") and v.values == (1.0, 0.5)
    path.write_text("[]")
    with pytest.raises(ValueError):
        ConceptVector.from_file(path)


vectors = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=6)


@given(vectors, vectors)
def test_concept_distance_properties(a, b):
    n = min(len(a), len(b))
    v, w = ConceptVector.of(a[:n]), ConceptVector.of(b[:n])
    if not any(a[:n]) or not any(b[:n]):
        return
    d = concept_distance(v, w)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(concept_distance(w, v), abs=1e-12)
    scaled = ConceptVector.of([7 * x for x in v.values])
    assert concept_distance(scaled, w) == pytest.approx(d, abs=1e-9)
    assert concept_distance(v, v) == pytest.approx(0.0, abs=1e-9)


def test_compilability_proxy(full_grammar, tic_tac_toe):
    assert compilability(full_grammar, tic_tac_toe.description)
    assert compilability(full_grammar, tic_tac_toe.description).mode == "proxy"
    assert not compilability(full_grammar, "")
    broken = tic_tac_toe.description.replace("(is Line 3)", "(== (count Moves) 9)")
    result = compilability(full_grammar, broken)
    assert not result and "'=='" in result.error
    assert compilability(full_grammar, "(game").error == "unexpected end of input"
    result = compilability(full_grammar, '(game "x')
    assert not result and "unterminated" in result.error


def test_compilability_external_hook(full_grammar):
    ok = f"{PY} -c \"import sys; sys.exit(0 if 'game' in sys.stdin.read() else 1)\""
    assert compilability(full_grammar, "(game)", external_cmd=ok).mode == "external"
    assert compilability(full_grammar, "(game)", external_cmd=ok)
    assert not compilability(full_grammar, "(nope)", external_cmd=ok)
    crash = f'{PY} -c "import sys; sys.exit(3)"'
    result = compilability(full_grammar, "(game)", external_cmd=crash)
    assert not result and "exit 3" in result.error
    slow = f'{PY} -c "import time; time.sleep(5)"'
    result = compilability(full_grammar, "(game)", external_cmd=slow, timeout=0.2)
    assert not result and "timed out" in result.error
    result = compilability(full_grammar, "(game)", external_cmd="/nonexistent/compiler")
    assert not result and result.error


def test_functional_requires_compilable():
    with pytest.raises(ValueError):
        InstanceMetrics("x", compilable=False, functional=True, rouge_l_f1=10.0)
    with pytest.raises(ValueError):
        InstanceMetrics("x", compilable=True, functional=None, rouge_l_f1=10.0, ncd=0.2)
    InstanceMetrics("x", compilable=True, functional=True, rouge_l_f1=10.0, ncd=0.2)


def test_score_instance_rules(full_grammar, tic_tac_toe):
    y = tic_tac_toe.description
    same = (ConceptVector.of([1, 2]), ConceptVector.of([1, 2]))
    row = score_instance("t", full_grammar, y, "(broken", concepts=same)
    assert (row.compilable, row.functional, row.ncd) == (False, False, 1.0)
    row = score_instance("t", full_grammar, y, y, concepts=same)
    assert (row.compilable, row.functional, row.ncd, row.ncd_raw) == (True, None, None, 0.0)
    assert row.rouge_l_f1 == 100.0
    yes = f'{PY} -c "pass"'
    row = score_instance("t", full_grammar, y, y, functional_cmd=yes, concepts=same)
    assert (row.functional, row.ncd) == (True, 0.0)
    no = f'{PY} -c "raise SystemExit(1)"'
    row = score_instance("t", full_grammar, y, y, functional_cmd=no, concepts=same)
    assert (row.functional, row.ncd) == (False, 1.0)
    row = score_instance("t", full_grammar, y, y, functional_cmd=yes)
    assert row.ncd is None and "concept vectors missing" in row.notes


def _row(i, **kw):
    base = dict(compilable=True, functional=None, rouge_l_f1=50.0)
    base.update(kw)
    return InstanceMetrics(str(i), **base)


def test_aggregate_examples():
    one = aggregate([[_row(0, rouge_l_f1=40.0), _row(1, rouge_l_f1=60.0)]])
    assert (one.rouge_l_f1.mean, one.rouge_l_f1.stderr) == (50.0, 0.0)
    three = aggregate([[_row(0, rouge_l_f1=v)] for v in (62.0, 64.0, 66.0)])
    assert three.rouge_l_f1.mean == 64.0
    assert abs(three.rouge_l_f1.stderr - 2 / math.sqrt(3)) < 1e-6
    assert abs(three.rouge_l_f1.stderr - 1.1547) < 1e-4
    assert str(three.rouge_l_f1) == "64.0±1.2"


def test_aggregate_compilability_percentages():
    # 27 of 100 instances compile in each of three seeds
    seed = [_row(i, compilable=i < 27, functional=False if i >= 27 else None) for i in range(100)]
    report = aggregate([seed, seed, seed])
    assert (report.compilability.mean, report.compilability.stderr) == (27.0, 0.0)
    assert report.functionality is None


def test_aggregate_ncd_counts_nonfunctional_as_one():
    rows = [
        _row(0, functional=True, ncd=0.2),
        _row(1, compilable=False, functional=False, ncd=1.0),
    ]
    report = aggregate([rows])
    assert report.ncd.mean == pytest.approx(0.6)
    assert report.functionality.mean == 50.0


def test_aggregate_unknown_functionality_reports_raw_ncd():
    report = aggregate([[_row(0, ncd_raw=0.25), _row(1, ncd_raw=0.75)]])
    assert report.ncd is None
    assert report.ncd_raw.mean == 0.5
    assert any("functionality unknown" in n for n in report.notes)


def test_aggregate_needs_a_seed():
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        mean_stderr([])


@given(st.lists(st.lists(st.floats(0, 100), min_size=1, max_size=5), min_size=1, max_size=5), st.randoms())
def test_aggregate_is_permutation_invariant(values, rnd):
    seeds = [[_row(i, rouge_l_f1=v) for i, v in enumerate(vs)] for vs in values]
    shuffled = [rnd.sample(rows, len(rows)) for rows in seeds]
    shuffled = rnd.sample(shuffled, len(shuffled))
    a, b = aggregate(seeds), aggregate(shuffled)
    assert a.rouge_l_f1.mean == pytest.approx(b.rouge_l_f1.mean)
    assert a.rouge_l_f1.stderr == pytest.approx(b.rouge_l_f1.stderr, abs=1e-9)


def test_report_rows_serialize():
    row = _row(0, notes=("x",))
    assert json.loads(json.dumps(row.to_json()))["notes"] == ["x"]
    assert json.dumps(aggregate([[row]]).to_json())


def test_random_rows_keep_the_implication():
    rng = random.Random(0)
    for i in range(200):
        comp = rng.random() < 0.5
        fun = rng.choice([None, False, comp and rng.random() < 0.5])
        ncd = None if fun is None else (1.0 if fun is False else rng.random())
        row = InstanceMetrics(str(i), comp, fun, rng.uniform(0, 100), ncd)
        assert not row.functional or row.compilable
