from __future__ import annotations

import random

import pytest
from hypothesis import strategies as st

from vforge import corpus
from vforge.isa import Opcode, Program, execute, ins
from vforge.variants import load_passdb

RRR = ["ADD", "SUB", "MUL", "AND", "OR", "XOR", "SLL", "SRL"]


def random_straightline(rng: random.Random, length: int, regs: int = 14, name: str = "rand") -> Program:
    """Loop-free program of ``length`` instructions (the last is HALT) that
    reads two inputs and writes a few outputs."""
    body = [ins("IN", 0), ins("IN", 1)]
    while len(body) < length - 1:
        r = lambda: rng.randrange(regs)
        kind = rng.random()
        if kind < 0.5:
            body.append(ins(rng.choice(RRR), r(), r(), r()))
        elif kind < 0.65:
            body.append(ins("ADDI", r(), r(), rng.randrange(-(1 << 31), 1 << 31)))
        elif kind < 0.8:
            body.append(ins("LI", r(), rng.randrange(-(1 << 31), 1 << 31)))
        elif kind < 0.9:
            body.append(ins("MOV", r(), r()))
        else:
            body.append(ins("OUT", r()))
    body = body[: max(length - 1, 0)]
    return Program(tuple(body) + (ins("HALT"),), name=name)


def random_listing(rng: random.Random, length: int, name: str = "listing") -> Program:
    """Arbitrary well-formed listing over all 19 opcodes (not meant to run)."""
    from vforge.isa import OPCODES, SIGNATURES, Imm, Instruction, Label, Reg

    n_labels = rng.randint(1, 3)
    instrs = []
    for _ in range(length - 1):
        op = rng.choice(OPCODES)
        ops = []
        for kind in SIGNATURES[op]:
            if kind == "R":
                ops.append(Reg(rng.randrange(16)))
            elif kind == "I":
                ops.append(Imm(rng.randrange(-(1 << 31), 1 << 31)))
            else:
                ops.append(Label(f"L{rng.randrange(n_labels)}"))
        instrs.append(Instruction(op, tuple(ops)))
    instrs.append(ins("HALT"))
    labels = {f"L{i}": rng.randrange(length) for i in range(n_labels)}
    return Program(tuple(instrs), labels, name=name)


@st.composite
def straightline_programs(draw, max_len: int = 30):
    seed = draw(st.integers(0, 2**32 - 1))
    length = draw(st.integers(3, max_len))
    return random_straightline(random.Random(seed), length)


@pytest.fixture(scope="session")
def passdb():
    return load_passdb()


@pytest.fixture(scope="session")
def entries():
    return {e.name: e for e in corpus.load_all()}


@pytest.fixture(scope="session")
def tea(entries):
    return entries["tea"]


def golden(prog: Program, inputs) -> tuple[int, ...]:
    r = execute(prog, inputs)
    assert r.ok
    return r.outputs


__all__ = ["random_straightline", "random_listing", "straightline_programs", "golden", "Opcode"]


@pytest.fixture(scope="session")
def tea_suite_timed(tea, passdb):
    """Scenario suite on the hardened TEA-like bundle and its wall time (shared: ~30s)."""
    import time

    from vforge.experiments import harden_program
    from vforge.scenarios import run_suite

    start = time.perf_counter()
    _, b = harden_program(tea.program, tea.fixtures, passdb)
    suite = run_suite(b.variants, tea.fixtures[0], seed=0)
    return suite, time.perf_counter() - start


@pytest.fixture(scope="session")
def tea_suite(tea_suite_timed):
    return tea_suite_timed[0]

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
