from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import httpx
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from gdlgen.backends import (
    BackendError,
    HTTPBackend,
    RandomBackend,
    ScriptedBackend,
    make_backend,
    random_expand,
)
from gdlgen.earley import recognize
from gdlgen.grammar import Grammar, GrammarError, Symbol, parse_grammar
from gdlgen.lexer import tokenize
from gdlgen.prompts import (
    DescriptionGeneration,
    GenerationRequest,
    RequestKind,
    RuleCompletion,
    TerminalChoice,
)

import oracles

GRAMMAR_REQ = GenerationRequest(RequestKind.GENERATE_GRAMMAR, "q")


def choice_request(cands):
    g = parse_grammar('s: "a"')
    return GenerationRequest(RequestKind.SELECT_TERMINAL, "q", (), TerminalChoice(g, "", tuple(cands)))


# ---------------------------------------------------------------------------
# scripted


def test_scripted_replays_by_kind_and_index():
    b = ScriptedBackend({"GenerateGrammar#0": "first", "GenerateGrammar#1": "second"})
    assert b.generate(GRAMMAR_REQ) == "first"
    assert b.generate(GRAMMAR_REQ) == "second"
    with pytest.raises(BackendError, match="GenerateGrammar#2"):
        b.generate(GRAMMAR_REQ)


def test_scripted_wildcard_and_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps({"GenerateGrammar#0": "exact", "GenerateGrammar#*": "any"}))
    b = ScriptedBackend.from_file(path)
    assert [b.generate(GRAMMAR_REQ) for _ in range(3)] == ["exact", "any", "any"]
    path.write_text("[1, 2]")
    with pytest.raises(ValueError):
        ScriptedBackend.from_file(path)


# ---------------------------------------------------------------------------
# random backend and random expansion


def test_random_backend_select_terminal_is_seeded():
    cands = [Symbol.literal(t) for t in ")abc"] + [Symbol.terminal_class("NUMBER")]
    picks = lambda seed: [RandomBackend(seed).generate(choice_request(cands)) for _ in range(5)]  # noqa: E731
    assert picks(3) == picks(3)
    seq = RandomBackend(3)
    assert len({seq.generate(choice_request(cands)) for _ in range(50)}) > 1
    assert set(seq.generate(choice_request(cands)) for _ in range(50)) <= {")", "a", "b", "c", "1"}


def test_random_backend_complete_rules_picks_from_candidates(full_grammar):
    offered = Grammar.from_alts(full_grammar.by_lhs["players"] + full_grammar.by_lhs["role"])
    req = GenerationRequest(
        RequestKind.COMPLETE_RULES, "q", (), RuleCompletion(Grammar.from_alts([]), offered)
    )
    answer = parse_grammar(RandomBackend(0).generate(req), partial=True)
    assert answer.nonterminals == {"players", "role"}
    assert all(a in offered for a in answer.alts)


def test_random_backend_describes_supplied_grammar(tic_tac_toe):
    req = GenerationRequest(
        RequestKind.GENERATE_DESCRIPTION, "q", (), DescriptionGeneration(tic_tac_toe.grammar)
    )
    out = RandomBackend(5).generate(req)
    assert recognize(tic_tac_toe.grammar, tokenize(out))
    assert RandomBackend(5).generate(req) == out


def test_expand_single_sentence():
    g = parse_grammar('s: "a"')
    assert {random_expand(g, seed) for seed in range(20)} == {"a"}


def _limited_language(depth_limit: int):
    # s: "a" s | "b": free choice above the limit, forced "b" from it on
    return {" ".join(["a"] * k + ["b"]) for k in range(depth_limit + 1)}


def test_expand_depth_limit_reachable_set():
    g = parse_grammar('s: "a" s | "b"')
    seen = {random_expand(g, seed, depth_limit=3) for seed in range(400)}
    assert seen == _limited_language(3) == {"b", "a b", "a a b", "a a a b"}
    assert all(recognize(g, tokenize(s)) for s in seen)


def test_expand_is_seeded():
    g = parse_grammar('s: "a" s | "b" s | "c"')
    assert random_expand(g, 11) == random_expand(g, 11)


def test_expand_concretizes_classes():
    g = parse_grammar('s: "(" "game" STRING NUMBER IDENTIFIER NAMED_PARAM ")"')
    out = random_expand(g, 0)
    assert out == '( game "s" 1 id p: )'
    assert recognize(g, tokenize(out))


def test_expand_empty_language_is_an_error():
    with pytest.raises(GrammarError):
        random_expand(parse_grammar('s: "a" s'), 0)


@given(st.integers(0, 2**32 - 1), st.integers(0, 6))
def test_expand_output_is_in_language(seed, depth_limit):
    rng = random.Random(seed)
    g = oracles.random_grammar(rng)
    assume("S" in oracles.productive(g.alts))
    out = random_expand(g, seed, depth_limit)
    assert recognize(g, tokenize(out))


def test_expand_fixture_grammars(games):
    for ex in games:
        for seed in range(10):
            assert recognize(ex.grammar, tokenize(random_expand(ex.grammar, seed)))


# ---------------------------------------------------------------------------
# HTTP backend against a local stub server


class _Stub:
    def __init__(self, statuses, body=None):
        self.statuses = list(statuses)
        self.body = body or {"choices": [{"message": {"role": "assistant", "content": "echo"}}]}
        self.requests = []


@pytest.fixture
def stub_server():
    servers = []

    def start(statuses=(200,), body=None):
        stub = _Stub(statuses, body)

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                stub.requests.append(
                    (self.path, dict(self.headers), json.loads(self.rfile.read(length)))
                )
                status = stub.statuses.pop(0) if len(stub.statuses) > 1 else stub.statuses[0]
                payload = json.dumps(stub.body if status == 200 else {"error": "x"}).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        server = HTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        servers.append(server)
        return f"http://127.0.0.1:{server.server_port}", stub

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()


def test_http_round_trip(stub_server, monkeypatch):
    monkeypatch.setenv("STUB_KEY", "sekret")
    url, stub = stub_server()
    b = HTTPBackend(url, "llama", api_key_env="STUB_KEY", temperature=0.0, max_tokens=64)
    assert b.generate(GRAMMAR_REQ) == "echo"
    path, headers, body = stub.requests[0]
    assert path == "/v1/chat/completions"
    assert headers["Authorization"] == "Bearer sekret"
    assert body["model"] == "llama"
    assert body["temperature"] == 0.0 and body["max_tokens"] == 64
    assert [m["role"] for m in body["messages"]] == ["user"]
    assert "Query:\nq" in body["messages"][0]["content"]


def test_http_retries_with_backoff(stub_server):
    url, stub = stub_server([500, 429, 200])
    sleeps = []
    b = HTTPBackend(url, "m", sleep=sleeps.append, max_attempts=3)
    assert b.generate(GRAMMAR_REQ) == "echo"
    assert sleeps == [1.0, 2.0]
    assert len(stub.requests) == 3


def test_http_gives_up_after_max_attempts(stub_server):
    url, stub = stub_server([503])
    sleeps = []
    b = HTTPBackend(url, "m", sleep=sleeps.append, max_attempts=4, backoff_base=0.5)
    with pytest.raises(BackendError, match="4 attempts"):
        b.generate(GRAMMAR_REQ)
    assert sleeps == [0.5, 1.0, 2.0]


def test_http_client_errors_are_not_retried(stub_server):
    url, stub = stub_server([400])
    b = HTTPBackend(url, "m", sleep=lambda s: None)
    with pytest.raises(BackendError, match="400"):
        b.generate(GRAMMAR_REQ)
    assert len(stub.requests) == 1


def test_http_malformed_payload(stub_server):
    url, _ = stub_server([200], body={"nothing": []})
    with pytest.raises(BackendError, match="malformed"):
        HTTPBackend(url, "m").generate(GRAMMAR_REQ)


def test_http_missing_api_key(monkeypatch):
    monkeypatch.delenv("NOPE_KEY", raising=False)
    b = HTTPBackend("http://127.0.0.1:9", "m", api_key_env="NOPE_KEY")
    with pytest.raises(BackendError, match="NOPE_KEY"):
        b.generate(GRAMMAR_REQ)


def test_http_transport_errors_are_retried():
    calls = []

    def handler(request):
        calls.append(request)
        if len(calls) < 3:
            raise httpx.ConnectError("refused", request=request)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    b = HTTPBackend("http://x", "m", sleep=lambda s: None, transport=httpx.MockTransport(handler))
    assert b.generate(GRAMMAR_REQ) == "ok"
    assert len(calls) == 3


def test_make_backend(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{}")
    assert isinstance(make_backend({"type": "scripted", "path": str(path)}), ScriptedBackend)
    rb = make_backend({"type": "random", "seed": 4, "depth_limit": 2})
    assert isinstance(rb, RandomBackend) and (rb.seed, rb.depth_limit) == (4, 2)
    hb = make_backend({"type": "http", "base_url": "http://h/", "model": "m", "max_concurrency": 2})
    assert isinstance(hb, HTTPBackend) and hb.capacity == 2
    assert hb.url == "http://h/v1/chat/completions"
    with pytest.raises(ValueError):
        make_backend({"type": "carrier-pigeon"})
