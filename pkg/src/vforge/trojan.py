"""Net-level model of the VR32 core: traced execution, static probabilities,
rare-trigger enumeration, Trojan injection and Trigger Avoidance Rate.

Every retired instruction is one cycle.  For each cycle the model derives 120
named single-bit nets from the decode and execute stages; they are packed
into a Python int (bit ``i`` is net ``NETS[i]``).

The datapath here is written independently of ``isa.Machine`` (decode into
fields, an ALU with an op-select code, a b-operand mux, write-back) so that the
two can be cross-checked.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import NoCandidateNets
from .isa import (
    DEFAULT_CYCLE_LIMIT,
    DEFAULT_MEM_WORDS,
    IO_BASE,
    MASK32,
    NUM_REGS,
    OPCODES,
    ExecutionResult,
    Imm,
    IODevice,
    MachineFault,
    Label,
    Opcode,
    Program,
    Reg,
    Termination,
)

# --- net catalog ------------------------------------------------------------------

OP_BASE, RS1_BASE, RS2_BASE, RD_BASE = 0, 19, 23, 27
IMM_BASE, ALU_BASE, ALUOP_BASE = 31, 63, 95
REG_WE, MEM_RE, MEM_WE, BR_TAKEN = 100, 101, 102, 103
PC_BASE = 104
NUM_NETS = 120

NETS: tuple[str, ...] = (
    tuple(f"op_{op.value}" for op in OPCODES)
    + tuple(f"rs1[{i}]" for i in range(4))
    + tuple(f"rs2[{i}]" for i in range(4))
    + tuple(f"rd[{i}]" for i in range(4))
    + tuple(f"imm[{i}]" for i in range(32))
    + tuple(f"alu[{i}]" for i in range(32))
    + tuple(f"aluop[{i}]" for i in range(5))
    + ("reg_we", "mem_re", "mem_we", "br_taken")
    + tuple(f"pc[{i}]" for i in range(16))
)
NET_INDEX = {n: i for i, n in enumerate(NETS)}
assert len(NETS) == NUM_NETS

# ALU op-select codes
ALU_NONE, ALU_ADD, ALU_SUB, ALU_MUL, ALU_AND, ALU_OR, ALU_XOR, ALU_SLL, ALU_SRL, ALU_PASSA, ALU_PASSB = range(11)


def net_mask(names: Iterable[str]) -> int:
    m = 0
    for n in names:
        if n not in NET_INDEX:
            raise KeyError(f"unknown net {n!r}")
        m |= 1 << NET_INDEX[n]
    return m


def mask_names(mask: int) -> list[str]:
    return [NETS[i] for i in range(NUM_NETS) if mask >> i & 1]


# --- decode -------------------------------------------------------------------------

# roles of the textual operands, per opcode
_ROLES = {
    **{op: ("rd", "rs1", "rs2") for op in (Opcode.ADD, Opcode.SUB, Opcode.MUL, Opcode.AND, Opcode.OR,
                                             Opcode.XOR, Opcode.SLL, Opcode.SRL)},
    Opcode.ADDI: ("rd", "rs1", "imm"),
    Opcode.LI: ("rd", "imm"),
    Opcode.MOV: ("rd", "rs1"),
    Opcode.LW: ("rd", "rs1", "imm"),
    Opcode.SW: ("rs2", "rs1", "imm"),
    Opcode.BEQ: ("rs1", "rs2", "imm"),
    Opcode.BNE: ("rs1", "rs2", "imm"),
    Opcode.JMP: ("imm",),
    Opcode.IN: ("rd",),
    Opcode.OUT: ("rs1",),
    Opcode.HALT: (),
}

_ALUOP = {
    Opcode.ADD: ALU_ADD, Opcode.SUB: ALU_SUB, Opcode.MUL: ALU_MUL, Opcode.AND: ALU_AND,
    Opcode.OR: ALU_OR, Opcode.XOR: ALU_XOR, Opcode.SLL: ALU_SLL, Opcode.SRL: ALU_SRL,
    Opcode.ADDI: ALU_ADD, Opcode.LI: ALU_PASSB, Opcode.MOV: ALU_PASSA,
    Opcode.LW: ALU_ADD, Opcode.SW: ALU_ADD, Opcode.BEQ: ALU_SUB, Opcode.BNE: ALU_SUB,
    Opcode.OUT: ALU_PASSA,
}
_USES_IMM = {Opcode.ADDI, Opcode.LI, Opcode.LW, Opcode.SW}
_WRITES_ALU = {Opcode.ADD, Opcode.SUB, Opcode.MUL, Opcode.AND, Opcode.OR, Opcode.XOR, Opcode.SLL,
               Opcode.SRL, Opcode.ADDI, Opcode.LI, Opcode.MOV}


@dataclass(frozen=True)
class Decoded:
    op: Opcode
    rd: int
    rs1: int
    rs2: int
    imm: int  # 32-bit field; branch/jump targets are instruction indices
    aluop: int
    imm_sel: bool
    static_nets: int  # nets that depend on decode and pc only


def decode(p: Program) -> list[Decoded]:
    lm = p.label_map
    out = []
    for pc, instr in enumerate(p.instructions):
        f = {"rd": 0, "rs1": 0, "rs2": 0, "imm": 0}
        for role, o in zip(_ROLES[instr.opcode], instr.operands):
            if isinstance(o, Reg):
                f[role] = o.index
            elif isinstance(o, Imm):
                f[role] = o.value & MASK32
            elif isinstance(o, Label):
                f[role] = lm[o.name]
        op = instr.opcode
        aluop = _ALUOP.get(op, ALU_NONE)
        nets = (
            1 << (OP_BASE + op.index)
            | f["rs1"] << RS1_BASE
            | f["rs2"] << RS2_BASE
            | f["rd"] << RD_BASE
            | f["imm"] << IMM_BASE
            | aluop << ALUOP_BASE
            | (pc & 0xFFFF) << PC_BASE
        )
        if op in _WRITES_ALU or op in (Opcode.LW, Opcode.IN):
            nets |= 1 << REG_WE
        if op is Opcode.LW:
            nets |= 1 << MEM_RE
        if op is Opcode.SW:
            nets |= 1 << MEM_WE
        out.append(Decoded(op, f["rd"], f["rs1"], f["rs2"], f["imm"], aluop, op in _USES_IMM, nets))
    return out


def alu(code: int, a: int, b: int) -> int:
    if code == ALU_ADD:
        return (a + b) & MASK32
    if code == ALU_SUB:
        return (a - b) & MASK32
    if code == ALU_MUL:
        return (a * b) & MASK32
    if code == ALU_AND:
        return a & b
    if code == ALU_OR:
        return a | b
    if code == ALU_XOR:
        return a ^ b
    if code == ALU_SLL:
        return (a << (b & 31)) & MASK32
    if code == ALU_SRL:
        return a >> (b & 31)
    if code == ALU_PASSA:
        return a
    if code == ALU_PASSB:
        return b
    return 0


# --- triggers and payloads -------------------------------------------------------------


@dataclass(frozen=True)
class Combinational:
    """Fires on every cycle where all listed nets are 1."""

    mask: int

    @classmethod
    def of(cls, names: Iterable[str]) -> "Combinational":
        return cls(net_mask(names))

    @property
    def nets(self) -> list[str]:
        return mask_names(self.mask)

    def to_json(self) -> dict:
        return {"type": "combinational", "nets": self.nets}


@dataclass(frozen=True)
class Step:
    mask: int
    value: int  # required values of the masked nets

    def matches(self, nets: int) -> bool:
        return nets & self.mask == self.value

    @classmethod
    def of(cls, required: dict[str, int]) -> "Step":
        mask = net_mask(required)
        value = net_mask(n for n, v in required.items() if v)
        return cls(mask, value)

    def to_json(self) -> dict:
        return {n: (self.value >> NET_INDEX[n]) & 1 for n in mask_names(self.mask)}


@dataclass(frozen=True)
class Sequential:
    """Advances one step per cycle that satisfies the current step; never resets
    on a non-matching cycle; fires on the cycle completing the last step and
    then re-arms from the first step."""

    steps: tuple[Step, ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("sequential trigger needs at least one step")

    def to_json(self) -> dict:
        return {"type": "sequential", "steps": [s.to_json() for s in self.steps]}


Trigger = Combinational | Sequential

PAYLOAD_KINDS = ("alu_bit", "imm_bit", "aluop_bit", "rd_bit", "select")
_PAYLOAD_WIDTH = {"alu_bit": 32, "imm_bit": 32, "aluop_bit": 5, "rd_bit": 4, "select": 1}


@dataclass(frozen=True)
class Payload:
    """Single-cycle inversion of one datapath signal.

    ``select`` inverts the branch decision on BEQ/BNE/JMP and the immediate /
    register b-operand mux on every other instruction.
    """

    kind: str
    bit: int = 0

    def __post_init__(self):
        if self.kind not in PAYLOAD_KINDS:
            raise ValueError(f"unknown payload kind {self.kind!r}")
        if not 0 <= self.bit < _PAYLOAD_WIDTH[self.kind]:
            raise ValueError(f"bit {self.bit} out of range for {self.kind}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "bit": self.bit}


@dataclass(frozen=True)
class TrojanSpec:
    trigger: Trigger
    payload: Payload
    name: str = "trojan"

    def to_json(self) -> dict:
        return {"name": self.name, "trigger": self.trigger.to_json(), "payload": self.payload.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "TrojanSpec":
        t = d["trigger"]
        if t["type"] == "combinational":
            trig: Trigger = Combinational.of(t["nets"])
        elif t["type"] == "sequential":
            trig = Sequential(tuple(Step.of(s) for s in t["steps"]))
        else:
            raise ValueError(f"unknown trigger type {t['type']!r}")
        return cls(trig, Payload(d["payload"]["kind"], d["payload"].get("bit", 0)), d.get("name", "trojan"))


class TriggerState:
    """Runtime automaton for one trigger."""

    def __init__(self, trigger: Trigger):
        self.trigger = trigger
        self.pos = 0

    def step(self, nets: int) -> bool:
        t = self.trigger
        if isinstance(t, Combinational):
            return nets & t.mask == t.mask
        if t.steps[self.pos].matches(nets):
            self.pos += 1
            if self.pos == len(t.steps):
                self.pos = 0
                return True
        return False


# --- traced machine --------------------------------------------------------------------


@dataclass
class NetTraceMatrix:
    """Per-cycle net values (packed ints) with the pc of each cycle."""

    rows: list[int]
    pcs: list[int]
    meta: dict = field(default_factory=dict)

    @property
    def cycles(self) -> int:
        return len(self.rows)

    @property
    def bits(self) -> np.ndarray:
        """cycles x 120 array of 0/1 (uint8)."""
        if not self.rows:
            return np.zeros((0, NUM_NETS), dtype=np.uint8)
        raw = np.array([r.to_bytes(15, "little") for r in self.rows], dtype="S15")
        as_bytes = np.frombuffer(raw.tobytes(), dtype=np.uint8).reshape(len(self.rows), 15)
        return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :NUM_NETS]

    def window(self, ranges: Sequence[tuple[int, int]], **meta) -> "NetTraceMatrix":
        """Cycles whose pc falls into any half-open ``[start, end)`` range."""
        keep = [i for i, pc in enumerate(self.pcs) if any(s <= pc < e for s, e in ranges)]
        return NetTraceMatrix([self.rows[i] for i in keep], [self.pcs[i] for i in keep], {**self.meta, **meta})

    def concat(self, other: "NetTraceMatrix", **meta) -> "NetTraceMatrix":
        return NetTraceMatrix(self.rows + other.rows, self.pcs + other.pcs, {**self.meta, **meta})

    def dump(self) -> str:
        lines = [" ".join(NETS)]
        for r in self.rows:
            lines.append("".join("1" if r >> i & 1 else "0" for i in range(NUM_NETS)))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse_dump(cls, text: str) -> "NetTraceMatrix":
        lines = text.splitlines()
        if not lines or tuple(lines[0].split()) != NETS:
            raise ValueError("trace header does not match the net catalog")
        rows = [int(ln[::-1], 2) for ln in lines[1:] if ln]
        return cls(rows, [(r >> PC_BASE) & 0xFFFF for r in rows])


class TracedMachine:
    """Net-level executor with optional Trojans.  Same I/O and memory model as
    the reference interpreter; identical results when no Trojan fires."""

    def __init__(
        self,
        program: Program,
        inputs: Sequence[int] = (),
        trojans: Sequence[TrojanSpec] = (),
        record: bool = True,
        watch: Iterable[int] = (),
        mem_words: int = DEFAULT_MEM_WORDS,
    ):
        self.program = program
        self.decoded = decode(program)
        self.trojans = list(trojans)
        self.states = [TriggerState(t.trigger) for t in self.trojans]
        self.regs = [0] * NUM_REGS
        self.mem: dict[int, int] = {}
        self.mem_words = mem_words
        self.io = IODevice(inputs)
        self.pc = 0
        self.cycles = 0
        self.record = record
        self.rows: list[int] = []
        self.pcs: list[int] = []
        self.fired: list[list[tuple[int, int]]] = [[] for _ in self.trojans]  # (cycle, pc)
        self.pc_hits = {pc: 0 for pc in watch}

    @property
    def trace(self) -> NetTraceMatrix:
        return NetTraceMatrix(self.rows, self.pcs, {"program": self.program.name})

    def _load(self, addr: int) -> int:
        if addr >= IO_BASE:
            return self.io.load(addr - IO_BASE)
        if addr >= self.mem_words:
            raise MachineFault("OutOfBoundsMemory")
        return self.mem.get(addr, 0)

    def _store(self, addr: int, value: int) -> None:
        if addr >= IO_BASE:
            self.io.store(addr - IO_BASE, value)
        elif addr >= self.mem_words:
            raise MachineFault("OutOfBoundsMemory")
        else:
            self.mem[addr] = value

    def _cycle(self) -> bool:
        """Execute one instruction; False once HALT retires."""
        n = len(self.decoded)
        pc = self.pc
        if not 0 <= pc < n:
            raise MachineFault("PcOutOfRange")
        if pc in self.pc_hits:
            self.pc_hits[pc] += 1
        d = self.decoded[pc]
        op = d.op
        regs = self.regs

        # clean datapath values, from which the nets are sampled
        a = regs[d.rs1]
        b = d.imm if d.imm_sel else regs[d.rs2]
        result = alu(d.aluop, a, b)
        if op is Opcode.BEQ:
            taken = result == 0
        elif op is Opcode.BNE:
            taken = result != 0
        else:
            taken = op is Opcode.JMP
        nets = d.static_nets | result << ALU_BASE | int(taken) << BR_TAKEN

        # triggers see the clean nets; payloads corrupt this cycle only
        active = []
        for t, (spec, state) in enumerate(zip(self.trojans, self.states)):
            if state.step(nets):
                self.fired[t].append((self.cycles, pc))
                active.append(spec.payload)
        if active:
            imm, aluop, rd, imm_sel = d.imm, d.aluop, d.rd, d.imm_sel
            flip_alu = 0
            flip_taken = False
            for pl in active:
                if pl.kind == "alu_bit":
                    flip_alu ^= 1 << pl.bit
                elif pl.kind == "imm_bit":
                    imm ^= 1 << pl.bit
                elif pl.kind == "aluop_bit":
                    aluop ^= 1 << pl.bit
                elif pl.kind == "rd_bit":
                    rd ^= 1 << pl.bit
                elif op in (Opcode.BEQ, Opcode.BNE, Opcode.JMP):
                    flip_taken = not flip_taken
                else:
                    imm_sel = not imm_sel
            b = imm if imm_sel else regs[d.rs2]
            result = alu(aluop, a, b) ^ flip_alu
            if op is Opcode.BEQ:
                taken = result == 0
            elif op is Opcode.BNE:
                taken = result != 0
            taken ^= flip_taken
        else:
            imm, rd = d.imm, d.rd

        if self.record:
            self.rows.append(nets)
            self.pcs.append(pc)
        self.cycles += 1
        next_pc = pc + 1

        if op in _WRITES_ALU:
            regs[rd] = result
        elif op is Opcode.LW:
            regs[rd] = self._load(result)
        elif op is Opcode.SW:
            self._store(result, regs[d.rs2])
        elif op is Opcode.IN:
            regs[rd] = self.io.read_input()
        elif op is Opcode.OUT:
            self.io.out(result, self.mem, self.mem_words)
        elif op is Opcode.HALT:
            return False
        if taken:
            next_pc = imm
        self.pc = next_pc
        return True

    def run(self, cycle_limit: int = DEFAULT_CYCLE_LIMIT) -> ExecutionResult:
        if cycle_limit <= 0:
            raise ValueError("cycle_limit must be positive")
        term = Termination.CYCLE_LIMIT
        fault = None
        try:
            while self.cycles < cycle_limit:
                if not self._cycle():
                    term = Termination.HALTED
                    break
        except MachineFault as f:
            term, fault = Termination.FAULT, f.kind
        return ExecutionResult(tuple(self.io.outputs), self.cycles, term, fault)


def trace_nets(
    p: Program, inputs: Sequence[int] = (), cycle_limit: int = DEFAULT_CYCLE_LIMIT
) -> tuple[NetTraceMatrix, ExecutionResult]:
    m = TracedMachine(p, inputs, record=True)
    res = m.run(cycle_limit)
    return m.trace, res


# --- static probability -----------------------------------------------------------------


@dataclass(frozen=True)
class StaticProbabilityTable:
    ones: tuple[int, ...]  # per net, cycles at logic 1
    cycles: int

    def sp(self, net: str | int) -> Fraction:
        i = NET_INDEX[net] if isinstance(net, str) else net
        return Fraction(self.ones[i], self.cycles)

    def as_array(self) -> np.ndarray:
        return np.array(self.ones, dtype=float) / self.cycles

    def in_range(self, sp_min: float, sp_max: float) -> list[int]:
        """Net indices with sp_min <= SP <= sp_max and at least one active cycle."""
        lo, hi = Fraction(sp_min), Fraction(sp_max)
        return [i for i, c in enumerate(self.ones) if c > 0 and lo <= Fraction(c, self.cycles) <= hi]


def static_probabilities(t: NetTraceMatrix) -> StaticProbabilityTable:
    if t.cycles < 1:
        raise ValueError("static probabilities need at least one cycle")
    ones = t.bits.sum(axis=0, dtype=np.int64)
    return StaticProbabilityTable(tuple(int(c) for c in ones), t.cycles)


# --- trigger enumeration ---------------------------------------------------------------

DEFAULT_CAP = 200_000


@dataclass
class TriggerSet:
    masks: list[int]  # sorted combinational trigger masks
    k: int
    sp_range: tuple[float, float]
    candidates: list[int]  # net indices
    mode: str  # "exhaustive" | "sampled"

    def __len__(self) -> int:
        return len(self.masks)

    def triggers(self) -> list[Combinational]:
        return [Combinational(m) for m in self.masks]


def _maximal(rows: Iterable[int]) -> list[int]:
    uniq = sorted(set(rows), key=lambda r: -r.bit_count())
    keep: list[int] = []
    for r in uniq:
        if not any(r & ~q == 0 for q in keep):
            keep.append(r)
    return sorted(keep)


def _bits(x: int) -> list[int]:
    out = []
    while x:
        low = x & -x
        out.append(low.bit_length() - 1)
        x ^= low
    return out


def enumerate_triggers(
    t: NetTraceMatrix,
    k: int,
    sp_range: tuple[float, float],
    cap: int = DEFAULT_CAP,
    seed: int = 0,
    max_attempts_factor: int = 50,
    enum_budget: int | None = None,
) -> TriggerSet:
    """k-input combinational triggers over rare nets that fire at least once in ``t``.

    Exhaustive when either the number of k-subsets of candidates is within
    ``cap`` or the valid set can be listed directly (the sum over distinct
    maximal co-active rows of C(row size, k) is within ``enum_budget``,
    default ten times ``cap``) and has
    at most ``cap`` members.  Otherwise ``cap`` triggers are drawn uniformly
    without replacement and the set is labelled sampled.
    """
    sp_min, sp_max = sp_range
    if not sp_min < sp_max:
        raise ValueError("sp_min must be below sp_max")
    if k < 1:
        raise ValueError("k must be positive")
    table = static_probabilities(t)
    cand = table.in_range(sp_min, sp_max)
    if not cand:
        raise NoCandidateNets(f"no nets with SP in [{sp_min}, {sp_max}]")
    cmask = net_mask(NETS[i] for i in cand)
    rows = _maximal(r & cmask for r in t.rows if (r & cmask).bit_count() >= k)
    sizes = [r.bit_count() for r in rows]
    union_bound = sum(math.comb(s, k) for s in sizes)
    found: set[int] = set()
    rng = random.Random(seed)
    if math.comb(len(cand), k) <= cap:
        for m in map(sum, itertools.combinations([1 << i for i in cand], k)):
            if any(m & ~r == 0 for r in rows):
                found.add(m)
        mode = "exhaustive"
    elif union_bound <= max(cap, enum_budget if enum_budget is not None else 10 * cap):
        for r in rows:
            found.update(map(sum, itertools.combinations([1 << i for i in _bits(r)], k)))
        mode = "exhaustive"
        if len(found) > cap:
            found = set(rng.sample(sorted(found), cap))
            mode = "sampled"
    else:
        # uniform over the union of per-row subset families: pick a row in
        # proportion to its subset count, a uniform subset of it, and accept
        # with probability 1 / (number of rows containing that subset)
        weights = list(itertools.accumulate(math.comb(s, k) for s in sizes))
        row_bits = [_bits(r) for r in rows]
        attempts = 0
        limit = cap * max_attempts_factor
        while len(found) < cap and attempts < limit:
            attempts += 1
            (ri,) = rng.choices(range(len(rows)), cum_weights=weights)
            m = 0
            for i in rng.sample(row_bits[ri], k):
                m |= 1 << i
            if m in found:
                continue
            mult = sum(1 for r in rows if m & ~r == 0)
            if rng.random() * mult < 1:
                found.add(m)
        mode = "sampled"
    return TriggerSet(sorted(found), k, (sp_min, sp_max), cand, mode)


def fires(trigger: Trigger, t: NetTraceMatrix) -> list[int]:
    """Cycle indices (within ``t``) at which the trigger fires."""
    state = TriggerState(trigger)
    return [c for c, row in enumerate(t.rows) if state.step(row)]


def _net_bitsets(t: NetTraceMatrix) -> list[int]:
    """For each net, an int whose bit c is set when the net is 1 at cycle c."""
    bits = t.bits
    out = []
    for j in range(NUM_NETS):
        col = np.packbits(bits[:, j], bitorder="little")
        out.append(int.from_bytes(col.tobytes(), "little"))
    return out


def count_firing(masks: Sequence[int], t: NetTraceMatrix) -> int:
    """How many combinational trigger masks fire at least once in ``t``."""
    if not masks or t.cycles == 0:
        return 0
    sets = _net_bitsets(t)
    everything = (1 << t.cycles) - 1
    hits = 0
    for m in masks:
        acc = everything
        for i in _bits(m):
            acc &= sets[i]
            if not acc:
                break
        if acc:
            hits += 1
    return hits


# --- TAR ---------------------------------------------------------------------------------


def tar_from_counts(t_n: int, t_m: int) -> float | None:
    """(T_n - T_m) / T_n * 100, or None (NA) when T_n is 0."""
    if t_n < 0 or t_m < 0 or t_m > t_n:
        raise ValueError("need 0 <= T_m <= T_n")
    if t_n == 0:
        return None
    return (t_n - t_m) / t_n * 100


@dataclass(frozen=True)
class TarEntry:
    pair: str
    k: int
    sp_max: float
    t_n: int
    t_m: int
    mode: str = "exhaustive"

    @property
    def tar(self) -> float | None:
        return tar_from_counts(self.t_n, self.t_m)

    def row(self) -> dict:
        v = self.tar
        return {
            "pair": self.pair,
            "k": self.k,
            "sp_max": self.sp_max,
            "T_n": self.t_n,
            "T_m": self.t_m,
            "TAR": "NA" if v is None else f"{v:.2f}",
            "mode": self.mode,
        }


def tar(trace_n: NetTraceMatrix, trace_m: NetTraceMatrix, triggers_n: TriggerSet, pair: str = "n,m") -> TarEntry:
    t_m = count_firing(triggers_n.masks, trace_m)
    return TarEntry(pair, triggers_n.k, triggers_n.sp_range[1], len(triggers_n), t_m, triggers_n.mode)


# --- injection and classification ------------------------------------------------------------


@dataclass(frozen=True)
class Injection:
    """A bundle paired with the Trojans to apply while it runs."""

    bundle: object
    trojans: tuple[TrojanSpec, ...]


def inject(bundle, trojans: Sequence[TrojanSpec]) -> Injection:
    for tj in trojans:
        if not isinstance(tj, TrojanSpec):
            raise TypeError("inject expects TrojanSpec values")
    return Injection(bundle, tuple(trojans))


@dataclass(frozen=True)
class Outcome:
    activation: tuple[bool, ...]  # per variant, did any Trojan fire inside its code
    detected: bool
    tolerated: bool

    def mask_str(self) -> str:
        return "/".join("1" if a else "0" for a in self.activation)


def activation_mask(bundle, machine: TracedMachine) -> tuple[bool, ...]:
    """Per variant: whether any Trojan fired at a pc inside that variant's code."""
    segs = [bundle.segment("variant", i) for i in range(bundle.k)]
    act = [False] * bundle.k
    for hits in machine.fired:
        for _, pc in hits:
            for i, s in enumerate(segs):
                if s.contains(pc):
                    act[i] = True
    return tuple(act)


def classify_outcome(report, golden: Sequence[int], activation: Sequence[bool] = ()) -> Outcome:
    detected = report.verdict_word != 0
    tolerated = tuple(report.accepted) == tuple(golden) and report.verdict_word != 2
    return Outcome(tuple(activation), detected, tolerated)
