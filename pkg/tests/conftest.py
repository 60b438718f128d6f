from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from gdlgen.dataset import bundled_path, load_dataset
from gdlgen.grammar import parse_grammar

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def full_grammar():
    return parse_grammar(bundled_path("gdl.grammar").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def games():
    return load_dataset(bundled_path("games.jsonl"))


@pytest.fixture(scope="session")
def tic_tac_toe(games):
    return next(ex for ex in games if ex.id == "tic-tac-toe")
