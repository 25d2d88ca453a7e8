"""Pass sequences, differential equivalence checking, pool generation and
diversity-driven selection of k variants."""

from __future__ import annotations

import enum
import itertools
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InsufficientCandidates
from .isa import DEFAULT_CYCLE_LIMIT, MASK32, ExecutionResult, Program, count_inputs, execute, format_program
from .passes import PassId, apply_pass, derive_seed
from .similarity import SimilarityScore, pairwise_matrix

DEFAULT_RANDOM_VECTORS = 64


@dataclass(frozen=True)
class PassSequence:
    name: str
    passes: tuple[PassId, ...]

    def __post_init__(self):
        passes = tuple(PassId(p) if isinstance(p, str) else p for p in self.passes)
        if not passes:
            raise ValueError(f"pass sequence {self.name!r} is empty")
        object.__setattr__(self, "passes", passes)

    def to_json(self) -> dict:
        return {"name": self.name, "passes": [p.value for p in self.passes]}

    @classmethod
    def from_json(cls, d: dict) -> "PassSequence":
        return cls(d["name"], tuple(d["passes"]))


def load_passdb(path: str | Path | None = None) -> list[PassSequence]:
    if path is None:
        from .corpus import PASSDB_PATH

        path = PASSDB_PATH
    data = json.loads(Path(path).read_text())
    db = [PassSequence.from_json(d) for d in data]
    if not db:
        raise ValueError("pass-sequence database is empty")
    return db


def apply_sequence(p: Program, seq: PassSequence, master_seed: int) -> Program:
    for idx, pid in enumerate(seq.passes):
        p = apply_pass(p, pid, derive_seed(master_seed, seq.name, idx, pid.value))
    return p


# --- equivalence ---------------------------------------------------------------


class Verdict(enum.Enum):
    EQUIVALENT = "Equivalent"
    DIVERGENT = "Divergent"


@dataclass(frozen=True)
class EquivalenceResult:
    verdict: Verdict
    witness: tuple[int, ...] | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.verdict is Verdict.EQUIVALENT


def default_tests(
    n_inputs: int,
    fixtures: Iterable[Sequence[int]] = (),
    n_random: int = DEFAULT_RANDOM_VECTORS,
    seed: int = 0,
) -> list[tuple[int, ...]]:
    """Fixture vectors followed by ``n_random`` seeded uniform 32-bit vectors."""
    rng = random.Random(derive_seed("tests", seed, n_inputs))
    tests = [tuple(f) for f in fixtures]
    tests += [tuple(rng.getrandbits(32) for _ in range(n_inputs)) for _ in range(n_random)]
    return tests


def check_equivalence(
    p: Program,
    q: Program,
    tests: Sequence[Sequence[int]],
    cycle_limit: int = DEFAULT_CYCLE_LIMIT,
    reference: Sequence[ExecutionResult] | None = None,
) -> EquivalenceResult:
    """Differential check of ``q`` against ``p``.

    ``reference`` may hold precomputed results of ``p`` on ``tests`` (same order).
    """
    if not tests:
        raise ValueError("check_equivalence needs at least one test vector")
    for n, vec in enumerate(tests):
        vec = tuple(v & MASK32 for v in vec)
        rp = reference[n] if reference is not None else execute(p, vec, cycle_limit)
        rq = execute(q, vec, cycle_limit)
        if not rp.ok or not rq.ok:
            bad = rp if not rp.ok else rq
            which = "reference" if bad is rp else "candidate"
            return EquivalenceResult(
                Verdict.DIVERGENT, vec, f"{which} ended with {bad.termination.value} {bad.fault or ''}".strip()
            )
        if rp.outputs != rq.outputs:
            return EquivalenceResult(Verdict.DIVERGENT, vec, "output streams differ")
    return EquivalenceResult(Verdict.EQUIVALENT)


# --- pool ------------------------------------------------------------------------


@dataclass
class Candidate:
    name: str
    program: Program
    sequence: PassSequence
    seed: int
    verdict: EquivalenceResult
    # other (sequence, seed) pairs that produced the identical program
    duplicates: list[tuple[str, int]] = field(default_factory=list)


@dataclass
class CandidatePool:
    base: Program
    candidates: list[Candidate]
    generated: int = 0  # before deduplication

    @property
    def eligible(self) -> list[Candidate]:
        return [c for c in self.candidates if c.verdict.ok]

    def programs(self, include_base: bool = True) -> list[Program]:
        progs = [c.program for c in self.eligible]
        if include_base:
            progs = [self.base.with_name("base")] + progs
        return progs


def generate_pool(
    p: Program,
    db: Sequence[PassSequence],
    seeds: int,
    master_seed: int = 0,
    tests: Sequence[Sequence[int]] | None = None,
    cycle_limit: int = DEFAULT_CYCLE_LIMIT,
) -> CandidatePool:
    if not db:
        raise ValueError("pass-sequence database is empty")
    if seeds < 1:
        raise ValueError("seeds must be at least 1")
    if tests is None:
        tests = default_tests(count_inputs(p), seed=master_seed)
    base_text = format_program(p)
    reference = [execute(p, tuple(v & MASK32 for v in vec), cycle_limit) for vec in tests]
    by_text: dict[str, Candidate] = {}
    generated = 0
    for seq in db:
        for j in range(seeds):
            seed = derive_seed(master_seed, seq.name, j)
            q = apply_sequence(p, seq, seed)
            generated += 1
            name = f"{seq.name}-{j}"
            text = format_program(q)
            if text in by_text:
                by_text[text].duplicates.append((seq.name, j))
                continue
            by_text[text] = Candidate(name, q.with_name(name), seq, seed, check_equivalence(p, q, tests, cycle_limit, reference))
    # the unchanged base is not a candidate of its own
    cands = [c for t, c in by_text.items() if t != base_text]
    return CandidatePool(p, cands, generated)


# --- selection ---------------------------------------------------------------------


@dataclass
class SelectionResult:
    chosen: list[Program]
    objective: Fraction
    matrix: list[list[SimilarityScore]]  # k x k, in chosen order

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.chosen]


def _objective(idx: Sequence[int], vs: list[list[Fraction]]) -> Fraction:
    return max(vs[a][b] for a, b in itertools.combinations(idx, 2))


def greedy_select(vs: list[list[Fraction]], names: Sequence[str], k: int) -> list[int]:
    """Indices chosen by the greedy max-min-diversity rule, in order of addition."""
    n = len(names)
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise InsufficientCandidates(f"need {k} eligible programs, have {n}")
    pairs = sorted(itertools.combinations(range(n), 2), key=lambda ab: (vs[ab[0]][ab[1]], sorted((names[ab[0]], names[ab[1]]))))
    a, b = pairs[0]
    chosen = sorted((a, b), key=lambda i: names[i])
    while len(chosen) < k:
        rest = [i for i in range(n) if i not in chosen]
        best = min(rest, key=lambda i: (max(vs[i][c] for c in chosen), names[i]))
        chosen.append(best)
    return chosen


def exhaustive_select(vs: list[list[Fraction]], k: int) -> tuple[tuple[int, ...], Fraction]:
    """Reference optimum of the max-pairwise-VS objective (small pools only)."""
    best = min(itertools.combinations(range(len(vs)), k), key=lambda c: _objective(c, vs))
    return best, _objective(best, vs)


def select_variants(
    pool: CandidatePool | Sequence[Program],
    k: int,
    opcode_only: bool = False,
    include_base: bool = True,
) -> SelectionResult:
    if isinstance(pool, CandidatePool):
        progs = pool.programs(include_base)
    else:
        progs = list(pool)
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(progs) < k:
        raise InsufficientCandidates(f"need {k} eligible programs, have {len(progs)}")
    full = pairwise_matrix(progs, opcode_only)
    vs = [[s.normalized for s in row] for row in full]
    idx = greedy_select(vs, [p.name for p in progs], k)
    sub = [[full[a][b] for b in idx] for a in idx]
    return SelectionResult([progs[i] for i in idx], _objective(idx, vs), sub)
