"""VR32: a 19-opcode toy RISC ISA, its assembly format and reference interpreter.

The interpreter in this module is the golden semantics every other module is
checked against.  Register file: 16 x 32-bit words, no hardwired zero.  Memory
is word addressed.  Addresses at or above ``IO_BASE`` hit a small memory-mapped
I/O block used by hardened bundles to rewind the input stream and redirect
``OUT`` into memory regions.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

from .errors import (
    ArityMismatch,
    DuplicateLabel,
    FunctionError,
    ImmediateOutOfRange,
    MalformedProgram,
    OperandKindError,
    RegisterOutOfRange,
    UndefinedLabel,
    UnknownOpcode,
)

MASK32 = 0xFFFFFFFF
NUM_REGS = 16
DEFAULT_MEM_WORDS = 65536
DEFAULT_CYCLE_LIMIT = 1_000_000

# memory-mapped I/O block (word offsets from IO_BASE)
IO_BASE = 0xFFFFFF00
IO_OUT_BASE = 0  # write: redirect OUT to mem[value + n]; 0xFFFFFFFF restores the stream
IO_OUT_COUNT = 1  # read: words redirected since the last OUT_BASE write
IO_IN_REWIND = 2  # write: input cursor := 0
IO_OUT_LIMIT = 3  # write: max redirected words before RegionOverflow fault
IO_STREAM = MASK32


class Opcode(enum.Enum):
    ADD = "ADD"
    SUB = "SUB"
    MUL = "MUL"
    AND = "AND"
    OR = "OR"
    XOR = "XOR"
    SLL = "SLL"
    SRL = "SRL"
    ADDI = "ADDI"
    LI = "LI"
    MOV = "MOV"
    LW = "LW"
    SW = "SW"
    BEQ = "BEQ"
    BNE = "BNE"
    JMP = "JMP"
    IN = "IN"
    OUT = "OUT"
    HALT = "HALT"

    @property
    def index(self) -> int:
        return OPCODE_INDEX[self]

    def __str__(self) -> str:
        return self.value


OPCODES: tuple[Opcode, ...] = tuple(Opcode)
OPCODE_INDEX = {op: i for i, op in enumerate(OPCODES)}

# operand kinds in listing order, destination first: R=register, I=immediate, L=label
SIGNATURES: dict[Opcode, str] = {
    Opcode.ADD: "RRR",
    Opcode.SUB: "RRR",
    Opcode.MUL: "RRR",
    Opcode.AND: "RRR",
    Opcode.OR: "RRR",
    Opcode.XOR: "RRR",
    Opcode.SLL: "RRR",
    Opcode.SRL: "RRR",
    Opcode.ADDI: "RRI",
    Opcode.LI: "RI",
    Opcode.MOV: "RR",
    Opcode.LW: "RRI",
    Opcode.SW: "RRI",
    Opcode.BEQ: "RRL",
    Opcode.BNE: "RRL",
    Opcode.JMP: "L",
    Opcode.IN: "R",
    Opcode.OUT: "R",
    Opcode.HALT: "",
}

ALU_RRR = (Opcode.ADD, Opcode.SUB, Opcode.MUL, Opcode.AND, Opcode.OR, Opcode.XOR, Opcode.SLL, Opcode.SRL)
BRANCHES = (Opcode.BEQ, Opcode.BNE)
TERMINATORS = (Opcode.BEQ, Opcode.BNE, Opcode.JMP, Opcode.HALT)


def to_signed(value: int) -> int:
    value &= MASK32
    return value - (1 << 32) if value & 0x80000000 else value


@dataclass(frozen=True)
class Reg:
    index: int

    def __str__(self) -> str:
        return f"r{self.index}"


@dataclass(frozen=True)
class Imm:
    value: int  # stored signed, in [-2**31, 2**31)

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Label:
    name: str

    def __str__(self) -> str:
        return self.name


Operand = Union[Reg, Imm, Label]


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    operands: tuple[Operand, ...] = ()

    def __post_init__(self):
        sig = SIGNATURES[self.opcode]
        if len(self.operands) != len(sig):
            raise ArityMismatch(f"{self.opcode} takes {len(sig)} operands, got {len(self.operands)}")
        for kind, opnd in zip(sig, self.operands):
            expected = {"R": Reg, "I": Imm, "L": Label}[kind]
            if not isinstance(opnd, expected):
                raise OperandKindError(f"{self.opcode}: expected {expected.__name__}, got {opnd!r}")
            if kind == "R" and not 0 <= opnd.index < NUM_REGS:
                raise RegisterOutOfRange(f"register r{opnd.index}")
            if kind == "I" and not -(1 << 31) <= opnd.value < (1 << 31):
                raise ImmediateOutOfRange(f"immediate {opnd.value}")

    def __str__(self) -> str:
        if not self.operands:
            return self.opcode.value
        return f"{self.opcode.value} " + ", ".join(str(o) for o in self.operands)

    @property
    def regs(self) -> tuple[int, ...]:
        return tuple(o.index for o in self.operands if isinstance(o, Reg))

    @property
    def target(self) -> str | None:
        for o in self.operands:
            if isinstance(o, Label):
                return o.name
        return None

    @property
    def imm(self) -> int | None:
        for o in self.operands:
            if isinstance(o, Imm):
                return o.value
        return None


def ins(opcode: Opcode | str, *operands) -> Instruction:
    """Convenience constructor: ``ins("ADD", 1, 2, 3)`` or ``ins("BEQ", 1, 2, "loop")``.

    Plain ints are taken as registers where the signature wants a register and
    as immediates where it wants an immediate; strings become labels.
    """
    op = Opcode(opcode) if isinstance(opcode, str) else opcode
    sig = SIGNATURES[op]
    if len(operands) != len(sig):
        raise ArityMismatch(f"{op} takes {len(sig)} operands, got {len(operands)}")
    out = []
    for kind, o in zip(sig, operands):
        if isinstance(o, (Reg, Imm, Label)):
            out.append(o)
        elif kind == "R":
            out.append(Reg(o))
        elif kind == "I":
            out.append(Imm(o))
        else:
            out.append(Label(o))
    return Instruction(op, tuple(out))


@dataclass(frozen=True)
class Function:
    """A ``.func`` annotation covering instructions ``[start, end)``."""

    name: str
    start: int
    end: int


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instruction, ...] = ()
    labels: tuple[tuple[str, int], ...] = ()
    functions: tuple[Function, ...] = ()
    name: str = field(default="program", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        if isinstance(self.labels, Mapping):
            labels = tuple(self.labels.items())
        else:
            labels = tuple(self.labels)
        # canonical order: by index, stable
        object.__setattr__(self, "labels", tuple(sorted(labels, key=lambda kv: kv[1])))
        object.__setattr__(self, "functions", tuple(sorted(self.functions, key=lambda f: f.start)))
        self._validate()

    def _validate(self) -> None:
        n = len(self.instructions)
        seen = set()
        for name, idx in self.labels:
            if name in seen:
                raise DuplicateLabel(name)
            seen.add(name)
            if not 0 <= idx < n:
                raise MalformedProgram(f"label {name!r} points outside the program")
        for instr in self.instructions:
            t = instr.target
            if t is not None and t not in seen:
                raise UndefinedLabel(t)
        if n and self.instructions[-1].opcode not in (Opcode.HALT, Opcode.JMP):
            raise MalformedProgram("last instruction must be HALT or JMP")
        prev_end = 0
        names = set()
        for f in self.functions:
            if f.name in names:
                raise FunctionError(f"duplicate function {f.name!r}")
            names.add(f.name)
            if not (prev_end <= f.start < f.end <= n):
                raise FunctionError(f"function {f.name!r} has an invalid range")
            prev_end = f.end

    @cached_property
    def label_map(self) -> dict[str, int]:
        return dict(self.labels)

    @cached_property
    def labels_at(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for name, idx in self.labels:
            out.setdefault(idx, []).append(name)
        return out

    @cached_property
    def compiled(self) -> tuple[tuple[int, int, int, int], ...]:
        return tuple(compile_program(self))

    def __len__(self) -> int:
        return len(self.instructions)

    def with_name(self, name: str) -> "Program":
        return Program(self.instructions, self.labels, self.functions, name=name)


# ---------------------------------------------------------------------------
# parsing / formatting

_IDENT = r"[A-Za-z_.$][\w.$]*"
_LABEL_RE = re.compile(rf"^({_IDENT})\s*:\s*(.*)$")
_REG_RE = re.compile(r"^[rR](\d+)$")
_INT_RE = re.compile(r"^[+-]?(0[xX][0-9a-fA-F]+|\d+)$")


def _parse_operand(tok: str, kind: str, line: int) -> Operand:
    if kind == "R":
        m = _REG_RE.match(tok)
        if not m:
            raise OperandKindError(f"expected register, got {tok!r}", line)
        idx = int(m.group(1))
        if idx >= NUM_REGS:
            raise RegisterOutOfRange(f"register {tok}", line)
        return Reg(idx)
    if kind == "I":
        if not _INT_RE.match(tok):
            raise OperandKindError(f"expected immediate, got {tok!r}", line)
        value = int(tok, 0)
        if not -(1 << 31) <= value <= MASK32:
            raise ImmediateOutOfRange(f"immediate {tok} does not fit in 32 bits", line)
        return Imm(to_signed(value))
    if not re.fullmatch(_IDENT, tok) or _REG_RE.match(tok):
        raise OperandKindError(f"expected label, got {tok!r}", line)
    return Label(tok)


def parse_program(text: str, name: str = "program") -> Program:
    instructions: list[Instruction] = []
    labels: list[tuple[str, int]] = []
    label_lines: dict[str, int] = {}
    functions: list[Function] = []
    open_func: tuple[str, int, int] | None = None
    refs: list[tuple[str, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("."):
            parts = line.split()
            if parts[0] == ".func":
                if len(parts) != 2 or not re.fullmatch(_IDENT, parts[1]):
                    raise FunctionError("expected '.func <name>'", lineno)
                if open_func is not None:
                    raise FunctionError("nested .func", lineno)
                open_func = (parts[1], len(instructions), lineno)
            elif parts[0] == ".endfunc":
                if open_func is None:
                    raise FunctionError(".endfunc without .func", lineno)
                fname, start, _ = open_func
                if start == len(instructions):
                    raise FunctionError(f"function {fname!r} is empty", lineno)
                functions.append(Function(fname, start, len(instructions)))
                open_func = None
            else:
                raise FunctionError(f"unknown directive {parts[0]!r}", lineno)
            continue
        m = _LABEL_RE.match(line)
        while m:
            lname = m.group(1)
            if lname in label_lines:
                raise DuplicateLabel(lname, lineno)
            label_lines[lname] = lineno
            labels.append((lname, len(instructions)))
            line = m.group(2).strip()
            m = _LABEL_RE.match(line) if line else None
        if not line:
            continue
        parts = line.split(None, 1)
        mnemonic = parts[0].upper()
        try:
            op = Opcode(mnemonic)
        except ValueError:
            raise UnknownOpcode(f"unknown opcode {parts[0]!r}", lineno) from None
        toks = [t.strip() for t in parts[1].split(",")] if len(parts) > 1 else []
        sig = SIGNATURES[op]
        if len(toks) != len(sig) or any(not t for t in toks):
            raise ArityMismatch(f"{op} takes {len(sig)} operands, got {len(toks)}", lineno)
        operands = tuple(_parse_operand(t, k, lineno) for t, k in zip(toks, sig))
        instr = Instruction(op, operands)
        if instr.target is not None:
            refs.append((instr.target, lineno))
        instructions.append(instr)

    if open_func is not None:
        raise FunctionError(f"unterminated .func {open_func[0]!r}", open_func[2])
    for lname, lineno in refs:
        if lname not in label_lines:
            raise UndefinedLabel(lname, lineno)
    n = len(instructions)
    for lname, idx in labels:
        if idx >= n:
            raise MalformedProgram(f"label {lname!r} does not precede an instruction", label_lines[lname])
    return Program(tuple(instructions), tuple(labels), tuple(functions), name=name)


def format_program(p: Program) -> str:
    starts = {f.start: f for f in p.functions}
    ends = {f.end - 1 for f in p.functions}
    out: list[str] = []
    for i, instr in enumerate(p.instructions):
        if i in starts:
            out.append(f".func {starts[i].name}")
        for lname in p.labels_at.get(i, ()):
            out.append(f"{lname}:")
        out.append(str(instr))
        if i in ends:
            out.append(".endfunc")
    return "".join(line + "\n" for line in out)


def loc(p: Program) -> int:
    """Lines of code: instruction lines only (labels and directives excluded)."""
    return len(p.instructions)


# ---------------------------------------------------------------------------
# def/use


class MemEffect(enum.Enum):
    NONE = "none"
    READ = "read"
    WRITE = "write"


@dataclass(frozen=True)
class DefUse:
    defs: frozenset[int]
    uses: frozenset[int]
    mem: MemEffect = MemEffect.NONE
    io: bool = False  # observable side effect; ordered against other I/O


def def_use(i: Instruction) -> DefUse:
    op = i.opcode
    r = i.regs
    if op in ALU_RRR:
        return DefUse(frozenset({r[0]}), frozenset(r[1:]))
    if op in (Opcode.ADDI, Opcode.MOV):
        return DefUse(frozenset({r[0]}), frozenset({r[1]}))
    if op is Opcode.LI:
        return DefUse(frozenset({r[0]}), frozenset())
    if op is Opcode.LW:
        return DefUse(frozenset({r[0]}), frozenset({r[1]}), MemEffect.READ)
    if op is Opcode.SW:
        return DefUse(frozenset(), frozenset(r), MemEffect.WRITE)
    if op in BRANCHES:
        return DefUse(frozenset(), frozenset(r))
    if op is Opcode.IN:
        return DefUse(frozenset({r[0]}), frozenset(), io=True)
    if op is Opcode.OUT:
        return DefUse(frozenset(), frozenset({r[0]}), io=True)
    return DefUse(frozenset(), frozenset())


# ---------------------------------------------------------------------------
# execution


class Termination(enum.Enum):
    HALTED = "halted"
    CYCLE_LIMIT = "cycle_limit"
    FAULT = "fault"


@dataclass(frozen=True)
class ExecutionResult:
    outputs: tuple[int, ...]
    cycles: int
    termination: Termination
    fault: str | None = None

    @property
    def ok(self) -> bool:
        return self.termination is Termination.HALTED


class MachineFault(Exception):
    def __init__(self, kind: str):
        self.kind = kind


# numeric opcode codes for the dispatch loop
(_ADD, _SUB, _MUL, _AND, _OR, _XOR, _SLL, _SRL, _ADDI, _LI, _MOV, _LW, _SW,
 _BEQ, _BNE, _JMP, _IN, _OUT, _HALT) = range(19)


def compile_program(p: Program) -> list[tuple[int, int, int, int]]:
    """Lower a program to ``(code, a, b, c)`` tuples with labels resolved."""
    lm = p.label_map
    code = []
    for instr in p.instructions:
        ops = []
        for o in instr.operands:
            if isinstance(o, Reg):
                ops.append(o.index)
            elif isinstance(o, Imm):
                ops.append(o.value & MASK32)
            else:
                ops.append(lm[o.name])
        ops += [0] * (3 - len(ops))
        code.append((instr.opcode.index, ops[0], ops[1], ops[2]))
    return code


class IODevice:
    """The memory-mapped I/O block; shared by the golden and traced machines."""

    def __init__(self, inputs: Sequence[int]):
        self.inputs = [v & MASK32 for v in inputs]
        self.cursor = 0
        self.outputs: list[int] = []
        self.redirect: int | None = None
        self.count = 0
        self.limit: int | None = None

    def read_input(self) -> int:
        if self.cursor >= len(self.inputs):
            raise MachineFault("InputExhausted")
        v = self.inputs[self.cursor]
        self.cursor += 1
        return v

    def out(self, value: int, mem: dict[int, int], mem_words: int) -> None:
        if self.redirect is None:
            self.outputs.append(value)
            return
        if self.limit is not None and self.count >= self.limit:
            raise MachineFault("RegionOverflow")
        addr = (self.redirect + self.count) & MASK32
        if addr >= mem_words:
            raise MachineFault("OutOfBoundsMemory")
        mem[addr] = value
        self.count += 1

    def load(self, offset: int) -> int:
        if offset == IO_OUT_BASE:
            return IO_STREAM if self.redirect is None else self.redirect
        if offset == IO_OUT_COUNT:
            return self.count
        return 0

    def store(self, offset: int, value: int) -> None:
        if offset == IO_OUT_BASE:
            self.redirect = None if value == IO_STREAM else value
            self.count = 0
        elif offset == IO_IN_REWIND:
            self.cursor = 0
        elif offset == IO_OUT_LIMIT:
            self.limit = value


class Machine:
    """Reference interpreter.  One instruction retires per cycle."""

    def __init__(
        self,
        program: Program,
        inputs: Sequence[int] = (),
        mem_words: int = DEFAULT_MEM_WORDS,
        memory: Mapping[int, int] | None = None,
        watch: Iterable[int] = (),
    ):
        self.program = program
        self.code = program.compiled
        self.regs = [0] * NUM_REGS
        self.mem: dict[int, int] = {k: v & MASK32 for k, v in (memory or {}).items()}
        self.mem_words = mem_words
        self.io = IODevice(inputs)
        self.pc = 0
        self.cycles = 0
        self.watch = frozenset(watch)
        self.pc_hits: dict[int, int] = {pc: 0 for pc in self.watch}

    def run(self, cycle_limit: int = DEFAULT_CYCLE_LIMIT) -> ExecutionResult:
        if cycle_limit <= 0:
            raise ValueError("cycle_limit must be positive")
        code = self.code
        regs = self.regs
        mem = self.mem
        io = self.io
        mem_words = self.mem_words
        watch = self.watch
        hits = self.pc_hits
        n = len(code)
        pc = self.pc
        cycles = self.cycles
        term = Termination.CYCLE_LIMIT
        fault = None
        try:
            while cycles < cycle_limit:
                if not 0 <= pc < n:
                    raise MachineFault("PcOutOfRange")
                if watch and pc in watch:
                    hits[pc] += 1
                op, a, b, c = code[pc]
                cur = pc
                cycles += 1
                pc += 1
                if op == _ADDI:
                    regs[a] = (regs[b] + c) & MASK32
                elif op == _ADD:
                    regs[a] = (regs[b] + regs[c]) & MASK32
                elif op == _BNE:
                    if regs[a] != regs[b]:
                        pc = c
                elif op == _BEQ:
                    if regs[a] == regs[b]:
                        pc = c
                elif op == _LI:
                    regs[a] = b
                elif op == _XOR:
                    regs[a] = regs[b] ^ regs[c]
                elif op == _SUB:
                    regs[a] = (regs[b] - regs[c]) & MASK32
                elif op == _AND:
                    regs[a] = regs[b] & regs[c]
                elif op == _OR:
                    regs[a] = regs[b] | regs[c]
                elif op == _SLL:
                    regs[a] = (regs[b] << (regs[c] & 31)) & MASK32
                elif op == _SRL:
                    regs[a] = regs[b] >> (regs[c] & 31)
                elif op == _MUL:
                    regs[a] = (regs[b] * regs[c]) & MASK32
                elif op == _MOV:
                    regs[a] = regs[b]
                elif op == _LW:
                    addr = (regs[b] + c) & MASK32
                    if addr >= IO_BASE:
                        regs[a] = io.load(addr - IO_BASE)
                    elif addr >= mem_words:
                        raise MachineFault("OutOfBoundsMemory")
                    else:
                        regs[a] = mem.get(addr, 0)
                elif op == _SW:
                    addr = (regs[b] + c) & MASK32
                    if addr >= IO_BASE:
                        io.store(addr - IO_BASE, regs[a])
                    elif addr >= mem_words:
                        raise MachineFault("OutOfBoundsMemory")
                    else:
                        mem[addr] = regs[a]
                elif op == _JMP:
                    pc = a
                elif op == _IN:
                    regs[a] = io.read_input()
                elif op == _OUT:
                    io.out(regs[a], mem, mem_words)
                else:  # HALT
                    term = Termination.HALTED
                    pc = cur
                    break
        except MachineFault as f:
            term = Termination.FAULT
            fault = f.kind
        self.pc = pc
        self.cycles = cycles
        return ExecutionResult(tuple(io.outputs), cycles, term, fault)


def execute(
    p: Program,
    inputs: Sequence[int] = (),
    cycle_limit: int = DEFAULT_CYCLE_LIMIT,
    mem_words: int = DEFAULT_MEM_WORDS,
    memory: Mapping[int, int] | None = None,
) -> ExecutionResult:
    return Machine(p, inputs, mem_words=mem_words, memory=memory).run(cycle_limit)


def count_inputs(p: Program) -> int:
    """Static count of IN instructions (exact for loop-free input code)."""
    return sum(1 for i in p.instructions if i.opcode is Opcode.IN)
