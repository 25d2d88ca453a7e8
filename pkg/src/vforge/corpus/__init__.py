"""Bundled sample programs, their fixture inputs and the default pass database."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from ..isa import Program, count_inputs, parse_program

CORPUS_DIR = Path(__file__).resolve().parent
PASSDB_PATH = CORPUS_DIR / "passdb.json"


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    program: Program
    n_inputs: int
    fixtures: tuple[tuple[int, ...], ...]


@lru_cache(maxsize=None)
def _meta() -> dict:
    return json.loads((CORPUS_DIR / "fixtures.json").read_text())


def names() -> list[str]:
    return sorted(_meta())


def load(name: str) -> CorpusEntry:
    m = _meta()[name]
    prog = parse_program((CORPUS_DIR / f"{name}.s").read_text(), name)
    return CorpusEntry(name, prog, m["n_inputs"], tuple(tuple(f) for f in m["fixtures"]))


def load_all() -> list[CorpusEntry]:
    return [load(n) for n in names()]


def load_dir(path: str | Path) -> list[CorpusEntry]:
    """Load every ``*.s`` in ``path``; fixtures come from a sibling fixtures.json if present."""
    path = Path(path)
    meta = {}
    if (path / "fixtures.json").exists():
        meta = json.loads((path / "fixtures.json").read_text())
    out = []
    for f in sorted(path.glob("*.s")):
        prog = parse_program(f.read_text(), f.stem)
        m = meta.get(f.stem, {})
        fixtures = tuple(tuple(v) for v in m.get("fixtures", ()))
        n_inputs = m.get("n_inputs", len(fixtures[0]) if fixtures else count_inputs(prog))
        out.append(CorpusEntry(f.stem, prog, n_inputs, fixtures))
    return out
