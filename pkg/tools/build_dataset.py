"""Regenerate src/gdlgen/data/games.jsonl from games_src.py."""

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from games_src import GAMES  # noqa: E402

from gdlgen.grammar import parse_grammar, render_grammar  # noqa: E402
from gdlgen.lexer import tokenize  # noqa: E402
from gdlgen.minimal import extract_minimal  # noqa: E402

DATA = pathlib.Path(__file__).resolve().parents[1] / "src" / "gdlgen" / "data"


def main():
    g = parse_grammar((DATA / "gdl.grammar").read_text())
    with open(DATA / "games.jsonl", "w") as f:
        for game in GAMES:
            gy = extract_minimal(g, tokenize(game["description"]))
            record = {**game, "grammar": render_grammar(gy)}
            f.write(json.dumps(record) + "\n")


if __name__ == "__main__":
    main()
