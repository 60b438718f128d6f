from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from gdlgen.cli import instance_seed, main
from gdlgen.dataset import bundled_path
from gdlgen.earley import recognize
from gdlgen.grammar import parse_grammar, render_grammar
from gdlgen.lexer import tokenize

DATASET = str(bundled_path("games.jsonl"))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def desc_file(tmp_path, tic_tac_toe):
    path = tmp_path / "ttt.lud"
    path.write_text(tic_tac_toe.description)
    return path


def scripted_config(tmp_path, games, **extra):
    scripts = tmp_path / "scripts"
    scripts.mkdir(exist_ok=True)
    for ex in games:
        replies = {
            "GenerateGrammar#0": render_grammar(ex.grammar),
            "GenerateDescription#0": ex.description,
        }
        (scripts / f"{ex.id}.json").write_text(json.dumps(replies))
    config = tmp_path / "scripted.json"
    config.write_text(json.dumps({"backend": {"type": "scripted", "path": "scripts"}, **extra}))
    return config


# ---------------------------------------------------------------------------
# grammar-extract and prefix


def test_grammar_extract_round_trips(capsys, tmp_path, desc_file, tic_tac_toe, full_grammar):
    code, out, _ = run(capsys, "grammar-extract", "bundled", desc_file)
    assert code == 0
    gy = parse_grammar(out)
    assert gy.alt_set == tic_tac_toe.grammar.alt_set
    assert recognize(gy, tokenize(tic_tac_toe.description))
    gy_file = tmp_path / "gy.txt"
    gy_file.write_text(out)
    code, out, _ = run(capsys, "grammar-extract", gy_file, desc_file, "--check")
    assert (code, json.loads(out)) == (0, {"removable": []})


def test_check_reports_removable_rules(capsys, tmp_path, desc_file):
    full = tmp_path / "full.txt"
    full.write_text(render_grammar(parse_grammar((bundled_path("gdl.grammar")).read_text())))
    code, out, _ = run(capsys, "grammar-extract", full, desc_file, "--check", "--full", full)
    assert code == 1
    assert len(json.loads(out)["removable"]) > 10


def test_grammar_extract_rejects_non_sentence(capsys, tmp_path):
    bad = tmp_path / "bad.lud"
    bad.write_text("(game == 3)")
    code, out, err = run(capsys, "grammar-extract", "bundled", bad)
    assert code == 2 and out == "" and "error" in err
    code, _, err = run(capsys, "grammar-extract", "bundled", tmp_path / "missing.lud")
    assert code == 2 and "cannot read" in err


def test_prefix_json(capsys, tmp_path):
    partial = tmp_path / "p.lud"
    partial.write_text('(game "X" (players 2) junk')
    code, out, _ = run(capsys, "prefix", "bundled", partial)
    assert code == 0
    # "( game "X" ( players 2 )" is valid; equipment must open next
    assert json.loads(out) == {
        "status": "prefix",
        "valid_len": 7,
        "candidates": [{"kind": "literal", "text": "("}],
    }


def test_prefix_rejects_partial_grammar(capsys, tmp_path, desc_file):
    g = tmp_path / "g.txt"
    g.write_text('game: "(" "game" players ")"')
    code, _, err = run(capsys, "prefix", g, desc_file)
    assert code == 2 and "players" in err


# ---------------------------------------------------------------------------
# generate


def test_instance_seed_is_stable():
    assert instance_seed(0, "tic-tac-toe") == instance_seed(0, "tic-tac-toe")
    assert instance_seed(0, "tic-tac-toe") != instance_seed(1, "tic-tac-toe")


def test_generate_scripted_replay_is_byte_identical(capsys, tmp_path, games):
    config = scripted_config(tmp_path, games)
    trees = []
    for name, jobs in (("a", 1), ("b", 4)):
        out = tmp_path / name
        code, _, err = run(capsys, "generate", config, DATASET, "--method", "ggdg", "--out", out, "--jobs", jobs)
        assert code == 0, err
        trees.append(tree(out))
    assert trees[0] == trees[1]
    run_info = json.loads(trees[0]["run.json"])
    assert run_info["instances"] == [ex.id for ex in games]
    for ex in games:
        assert trees[0][f"{ex.id}/prediction.txt"].decode() == ex.description + "\n"
        gy = parse_grammar(trees[0][f"{ex.id}/grammar.txt"].decode())
        assert gy.alt_set == ex.grammar.alt_set
        trace = json.loads(trees[0][f"{ex.id}/trace.json"])
        assert len(trace["demos"]) == 3 and ex.id not in trace["demos"]


def test_generate_single_script_file(capsys, tmp_path, tic_tac_toe):
    script = tmp_path / "one.json"
    script.write_text(json.dumps({"GenerateDescription#*": tic_tac_toe.description}))
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"backend": {"type": "scripted", "path": str(script)}}))
    out = tmp_path / "gdg"
    code, _, err = run(capsys, "generate", config, DATASET, "--method", "gdg", "--out", out, "--limit", 2)
    assert code == 0, err
    files = tree(out)
    assert not any(name.endswith("grammar.txt") for name in files)
    assert json.loads(files["run.json"])["method"] == "gdg"
    assert len(json.loads(files["summary.json"])) == 2


def test_generate_random_is_reproducible(capsys, tmp_path):
    config = Path(__file__).resolve().parents[1] / "configs" / "random.json"
    trees = []
    for name in ("r1", "r2"):
        code, _, err = run(capsys, "generate", config, DATASET, "--method", "random", "--out", tmp_path / name, "--seed", 3)
        assert code == 0, err
        trees.append(tree(tmp_path / name))
    assert trees[0] == trees[1]
    code, _, _ = run(capsys, "generate", config, DATASET, "--method", "random", "--out", tmp_path / "r3", "--seed", 4)
    assert tree(tmp_path / "r3") != trees[0]


def test_generate_backend_failure_exits_one(capsys, tmp_path):
    script = tmp_path / "empty.json"
    script.write_text("{}")
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"backend": {"type": "scripted", "path": "empty.json"}}))
    code, _, err = run(capsys, "generate", config, DATASET, "--out", tmp_path / "o", "--limit", 1)
    assert code == 1 and "GenerateGrammar#0" in err
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["tic-tac-toe"]["error"]


def test_generate_input_errors(capsys, tmp_path):
    config = tmp_path / "c.json"
    config.write_text("{not json")
    code, _, err = run(capsys, "generate", config, DATASET, "--out", tmp_path / "o")
    assert code == 2 and "malformed" in err
    config.write_text(json.dumps({"backend": {"type": "random"}, "rule_iter_limit": 0}))
    code, _, _ = run(capsys, "generate", config, DATASET, "--out", tmp_path / "o")
    assert code == 2
    config.write_text(json.dumps({"backend": {"type": "random"}, "demo_count": 9}))
    code, _, err = run(capsys, "generate", config, DATASET, "--out", tmp_path / "o")
    assert code == 2 and "demonstrations" in err


# ---------------------------------------------------------------------------
# evaluate


def test_evaluate_ground_truth(capsys, tmp_path, games):
    config = scripted_config(tmp_path, games)
    out = tmp_path / "gt"
    assert run(capsys, "generate", config, DATASET, "--out", out)[0] == 0
    concepts = tmp_path / "concepts"
    concepts.mkdir()
    for i, ex in enumerate(games):
        vec = json.dumps({"labels": ["a", "b"], "values": [1, i + 1]})
        (concepts / f"{ex.id}.reference.json").write_text(vec)
        (concepts / f"{ex.id}.predicted.json").write_text(vec)
    code, stdout, err = run(capsys, "evaluate", out, DATASET, "--concepts", concepts)
    assert code == 0, err
    report = json.loads(stdout)
    assert json.loads((out / "metrics.json").read_text()) == report
    agg = report["aggregate"]
    assert agg["compilability"]["mean"] == 100.0
    assert agg["rouge_l_f1"]["mean"] == 100.0
    assert agg["ncd_raw"]["mean"] == 0.0
    assert agg["ncd"] is None


def test_evaluate_functional_hook_and_seed_runs(capsys, tmp_path, games):
    config = scripted_config(tmp_path, games)
    runs = []
    for name in ("s0", "s1"):
        assert run(capsys, "generate", config, DATASET, "--out", tmp_path / name, "--limit", 4)[0] == 0
        runs.append(tmp_path / name)
    hook = f'{sys.executable} -c "pass"'
    code, stdout, err = run(capsys, "evaluate", runs[0], DATASET, "--seed-runs", runs[1], "--functional-cmd", hook)
    assert code == 0, err
    report = json.loads(stdout)
    assert len(report["runs"]) == 2
    assert report["aggregate"]["functionality"]["mean"] == 100.0
    assert any("concept" in note for note in report["aggregate"]["notes"])


def test_evaluate_rejects_garbage_run_dir(capsys, tmp_path):
    junk = tmp_path / "junk"
    junk.mkdir()
    (junk / "run.json").write_text("nope")
    code, _, err = run(capsys, "evaluate", junk, DATASET)
    assert code == 2 and "not a generation run" in err
    code, _, err = run(capsys, "evaluate", tmp_path / "absent", DATASET)
    assert code == 2
