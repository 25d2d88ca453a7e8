from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_straightline, straightline_programs
from vforge import corpus
from vforge.errors import (
    ArityMismatch,
    DuplicateLabel,
    ImmediateOutOfRange,
    MalformedProgram,
    UndefinedLabel,
    UnknownOpcode,
)
from vforge.isa import (
    MASK32,
    OPCODES,
    MemEffect,
    Program,
    Termination,
    def_use,
    execute,
    format_program,
    ins,
    parse_program,
)

M = MASK32


def tea_reference(v0, v1, k0, k1, k2, k3, rounds=32):
    """TEA encryption straight from the cipher's definition."""
    s, delta = 0, 0x9E3779B9
    for _ in range(rounds):
        s = (s + delta) & M
        v0 = (v0 + ((((v1 << 4) & M) + k0) ^ ((v1 + s) & M) ^ ((v1 >> 5) + k1))) & M
        v1 = (v1 + ((((v0 << 4) & M) + k2) ^ ((v0 + s) & M) ^ ((v0 >> 5) + k3))) & M
    return v0, v1


def xtea_reference(v0, v1, key, rounds):
    s, delta = 0, 0x9E3779B9
    for _ in range(rounds):
        v0 = (v0 + (((((v1 << 4) & M) ^ (v1 >> 5)) + v1) & M ^ ((s + key[s & 3]) & M))) & M
        s = (s + delta) & M
        v1 = (v1 + (((((v0 << 4) & M) ^ (v0 >> 5)) + v0) & M ^ ((s + key[(s >> 11) & 3]) & M))) & M
    return v0, v1


def test_opcode_alphabet_size():
    assert len(OPCODES) == 19


def test_minimal_program_parses():
    p = parse_program("LI r1, 5\nOUT r1\nHALT")
    assert len(p) == 3 and p.labels == ()


@pytest.mark.parametrize(
    "text, err",
    [
        ("ADD r1, r2\nHALT", ArityMismatch),
        ("FOO r1\nHALT", UnknownOpcode),
        ("JMP nowhere", UndefinedLabel),
        ("a:\nHALT\na:\nHALT", DuplicateLabel),
        ("LI r1, 0x100000000\nHALT", ImmediateOutOfRange),
        ("LI r1, 1", MalformedProgram),
    ],
)
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_program(text)


def test_error_carries_line_number():
    with pytest.raises(ArityMismatch) as e:
        parse_program("LI r1, 1\nADD r1, r2\nHALT")
    assert e.value.line == 2


def test_canonical_format():
    p = Program((ins("LI", 1, 5), ins("HALT")))
    assert format_program(p) == "LI r1, 5\nHALT\n"


def test_empty_program_round_trip():
    assert format_program(parse_program("")) == ""
    assert parse_program("") == Program()


def test_comments_labels_and_hex():
    p = parse_program("; header\nstart: LI r1, 0x10 ; sixteen\nOUT r1\nJMP end\nend:\nHALT")
    assert p.label_map == {"start": 0, "end": 3}
    assert execute(p).outputs == (16,)


@pytest.mark.parametrize("name", corpus.names())
def test_corpus_round_trip(name):
    text = (corpus.CORPUS_DIR / f"{name}.s").read_text()
    p = parse_program(text, name)
    assert format_program(p) == text
    assert parse_program(format_program(p)) == p


def test_tea_sample_has_functions():
    p = corpus.load("tea").program
    assert len(p.functions) >= 2


def test_execute_simple():
    r = execute(parse_program("LI r1, 5\nOUT r1\nHALT"), [])
    assert r.outputs == (5,) and r.cycles == 3 and r.termination is Termination.HALTED


def test_wraparound():
    r = execute(parse_program("LI r1, 0xFFFFFFFF\nADDI r1, r1, 1\nOUT r1\nHALT"))
    assert r.outputs == (0,)


def test_faults_and_limits():
    r = execute(parse_program("IN r1\nHALT"), [])
    assert r.termination is Termination.FAULT and r.fault == "InputExhausted"
    r = execute(parse_program("LI r1, 70000\nLW r2, r1, 0\nHALT"))
    assert r.termination is Termination.FAULT and r.fault == "OutOfBoundsMemory"
    r = execute(parse_program("loop:\nJMP loop"), cycle_limit=10)
    assert r.termination is Termination.CYCLE_LIMIT and r.cycles == 10


@pytest.mark.parametrize("fixture", range(2))
def test_tea_against_reference(tea, fixture):
    inp = tea.fixtures[fixture]
    assert execute(tea.program, inp).outputs == tea_reference(*inp)


def test_tea_random_keys(tea):
    rng = random.Random(7)
    for _ in range(10):
        inp = [rng.getrandbits(32) for _ in range(6)]
        assert execute(tea.program, inp).outputs == tea_reference(*inp)


def test_tea_unrolled_matches_tea(entries):
    inp = entries["tea_unrolled"].fixtures[0]
    assert execute(entries["tea_unrolled"].program, inp).outputs == tea_reference(*inp)


def test_xtea16_reference(entries):
    inp = entries["xtea16"].fixtures[0]
    assert execute(entries["xtea16"].program, inp).outputs == xtea_reference(inp[0], inp[1], inp[2:], 16)


def test_def_use_examples():
    d = def_use(ins("ADD", 1, 2, 3))
    assert (d.defs, d.uses, d.mem) == ({1}, {2, 3}, MemEffect.NONE)
    d = def_use(ins("SW", 1, 2, 4))
    assert (d.defs, d.uses, d.mem) == (set(), {1, 2}, MemEffect.WRITE)
    d = def_use(ins("OUT", 4))
    assert (d.defs, d.uses, d.mem, d.io) == (set(), {4}, MemEffect.NONE, True)
    d = def_use(ins("LW", 5, 6, 0))
    assert (d.defs, d.uses, d.mem) == ({5}, {6}, MemEffect.READ)


@settings(max_examples=60, deadline=None)
@given(straightline_programs(), st.lists(st.integers(0, M), min_size=2, max_size=2))
def test_round_trip_and_determinism(p, inputs):
    assert parse_program(format_program(p)) == p
    a, b = execute(p, inputs), execute(p, inputs)
    assert a == b
    assert a.cycles == len(p) and a.cycles <= 1_000_000
    assert all(0 <= v <= M for v in a.outputs)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cycle_count_never_exceeds_limit(seed):
    p = random_straightline(random.Random(seed), 20)
    limit = 1 + seed % 25
    r = execute(p, [1, 2], cycle_limit=limit)
    assert r.cycles <= limit
