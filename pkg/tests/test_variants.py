from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_straightline
from vforge import corpus
from vforge.errors import InsufficientCandidates
from vforge.isa import Program, execute, format_program, ins, parse_program
from vforge.passes import (
    GLUE_REGS,
    PassId,
    _depends,
    apply_pass,
    dependence_preds,
    derive_seed,
    rename_registers,
)
from vforge.isa import def_use
from vforge.similarity import build_signature, pairwise_matrix, variant_similarity
from vforge.variants import (
    PassSequence,
    Verdict,
    apply_sequence,
    check_equivalence,
    default_tests,
    exhaustive_select,
    generate_pool,
    greedy_select,
    select_variants,
)


def _outputs(p, tests):
    return [execute(p, t).outputs for t in tests]


def test_commute_example():
    p = parse_program("IN r2\nIN r3\nADD r1, r2, r3\nOUT r1\nHALT")
    q = apply_pass(p, PassId.COMMUTE, 1)
    assert q.instructions[2] == ins("ADD", 1, 3, 2)
    tests = default_tests(2, seed=3)
    assert check_equivalence(p, q, tests).ok


def test_rename_identity(tea):
    ident = {r: r for r in range(16)}
    assert rename_registers(tea.program, ident) == tea.program


def test_rename_avoids_glue_registers(tea):
    for s in range(20):
        q = apply_pass(tea.program, PassId.RENAME, s)
        assert not any(r in GLUE_REGS for i in q.instructions for r in i.regs)


def test_sched_preserves_tea(tea):
    tests = default_tests(6, tea.fixtures, n_random=8)
    want = _outputs(tea.program, tests)
    changed = 0
    for s in range(100):
        q = apply_pass(tea.program, PassId.SCHED, s)
        changed += q != tea.program
        assert _outputs(q, tests) == want
    assert changed > 50


@pytest.mark.parametrize("pid", list(PassId))
@pytest.mark.parametrize("name", corpus.names())
def test_each_pass_preserves_semantics(pid, name):
    e = corpus.load(name)
    tests = default_tests(e.n_inputs, e.fixtures, seed=1)
    want = _outputs(e.program, tests)
    for s in range(3):
        q = apply_pass(e.program, pid, derive_seed("pass-test", name, pid.value, s))
        assert _outputs(q, tests) == want, (pid, name, s)


def test_padpair_growth_cap(entries):
    for e in entries.values():
        q = apply_pass(e.program, PassId.PADPAIR, 5)
        assert len(q) <= len(e.program) * 1.10 + 2


def test_no_site_returns_unchanged():
    p = parse_program("HALT")
    for pid in PassId:
        assert apply_pass(p, pid, 9) == p


def test_sequence_replay_is_deterministic(tea):
    seq = PassSequence("rss", ("RENAME", "SCHED", "STRENGTH"))
    a = apply_sequence(tea.program, seq, 42)
    b = apply_sequence(tea.program, seq, 42)
    assert format_program(a) == format_program(b)
    assert check_equivalence(tea.program, a, default_tests(6, tea.fixtures)).ok


def test_empty_sequence_rejected():
    with pytest.raises(ValueError):
        PassSequence("nothing", ())


def test_equivalence_detects_mutant(tea):
    text = format_program(tea.program).replace("LI r7, -1640531527", "LI r7, -1640531526")
    mutant = parse_program(text)
    res = check_equivalence(tea.program, mutant, default_tests(6, tea.fixtures))
    assert res.verdict is Verdict.DIVERGENT and res.witness == tea.fixtures[0]
    assert check_equivalence(tea.program, tea.program, default_tests(6)).ok


def test_equivalence_reports_faults():
    p = parse_program("IN r1\nOUT r1\nHALT")
    q = parse_program("IN r1\nIN r2\nOUT r1\nHALT")
    res = check_equivalence(p, q, [(1,)])
    assert not res.ok and "fault" in res.detail


def _closure(preds):
    reach = []
    for j, ps in enumerate(preds):
        r = set(ps)
        for p in ps:
            r |= reach[p]
        reach.append(r)
    return reach


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dependence_dag_matches_pairwise(seed):
    rng = random.Random(seed)
    instrs = list(random_straightline(rng, 25, regs=5).instructions[:-1])
    for _ in range(4):
        at = rng.randrange(len(instrs))
        instrs.insert(at, rng.choice([ins("LW", rng.randrange(5), rng.randrange(5), 0),
                                      ins("SW", rng.randrange(5), rng.randrange(5), 1)]))
    reach = _closure(dependence_preds(instrs))
    du = [def_use(i) for i in instrs]
    for b in range(len(instrs)):
        for a in range(b):
            if _depends(du[a], du[b]):
                assert a in reach[b]
        for p in dependence_preds(instrs)[b]:
            assert _depends(du[p], du[b])


def test_pool_identity_sequence_dedups():
    p = parse_program("HALT")
    pool = generate_pool(p, [PassSequence("noop", ("COMMUTE",))], 3, 0, [()])
    assert pool.generated == 3 and pool.candidates == []
    assert len(pool.programs()) == 1


def test_pool_pinned_count(tea, passdb):
    pool = generate_pool(tea.program, passdb, 8, 0, default_tests(6, tea.fixtures))
    assert pool.generated == 64
    assert len(pool.candidates) == 64
    assert all(c.verdict.verdict is Verdict.EQUIVALENT for c in pool.candidates)


def test_selection_examples():
    a = parse_program("ADD r1, r2, r3\nHALT", "a")
    a2 = a.with_name("a2")
    b = parse_program("LI r4, 1\nJMP x\nx:\nHALT", "b")
    sel = select_variants([a, a2, b], 2)
    assert sel.objective == 0 and set(sel.names) == {"a", "b"}
    full = select_variants([a, a2, b], 3)
    assert full.objective == 1 and len(full.chosen) == 3
    with pytest.raises(InsufficientCandidates):
        select_variants([a, b], 3)


def _greedy_and_best(e, passdb):
    pool = generate_pool(e.program, passdb, 2, 0, default_tests(e.n_inputs, e.fixtures, n_random=8))
    progs = pool.programs()[:10]
    vs = [[s.normalized for s in row] for row in pairwise_matrix(progs)]
    idx = greedy_select(vs, [p.name for p in progs], 3)
    greedy = max(vs[x][y] for x, y in itertools.combinations(idx, 2))
    _, best = exhaustive_select(vs, 3)
    return greedy, best


def test_greedy_close_to_exhaustive(tea, passdb):
    greedy, best = _greedy_and_best(tea, passdb)
    assert best <= greedy <= best * 1.1


# greedy / exhaustive objective ratio on each program's 10-candidate pool
# (pinned seeds); greedy is not optimal everywhere and these are the gaps
GREEDY_GAP = {
    "bitcount": 1.222, "bsort": 1.0, "checksum": 1.2, "crc32": 1.14, "fib": 1.0, "gcd": 1.0,
    "lfsr": 1.0, "matmul": 1.066, "oaat": 1.0, "tea": 1.023, "tea_unrolled": 1.0,
    "xorshift": 1.069, "xtea16": 1.127,
}


@pytest.mark.parametrize("name", sorted(GREEDY_GAP))
def test_greedy_gap_pinned(name, entries, passdb):
    greedy, best = _greedy_and_best(entries[name], passdb)
    assert greedy >= best
    assert float(greedy / best) == pytest.approx(GREEDY_GAP[name], abs=1e-3)


def test_selection_monotone_for_pairs(tea, passdb):
    pool = generate_pool(tea.program, passdb, 4, 0, default_tests(6, tea.fixtures, n_random=8))
    progs = pool.programs()
    prev = None
    for n in range(2, len(progs) + 1, 5):
        obj = select_variants(progs[:n], 2).objective
        if prev is not None:
            assert obj <= prev
        prev = obj


@pytest.mark.parametrize("name", corpus.names())
def test_selected_pair_is_diverse(name, passdb):
    e = corpus.load(name)
    pool = generate_pool(e.program, passdb, 8, 0, default_tests(e.n_inputs, e.fixtures, n_random=8))
    sel = select_variants(pool, 2)
    assert sel.objective < 0.95
    a, b = sel.chosen
    assert variant_similarity(build_signature(a), build_signature(b)).normalized == sel.objective
