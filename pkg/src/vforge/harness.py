"""Variant integration: k variants, diversified compare glue and a majority vote
compiled into one VR32 program, plus the runner and overhead accounting.

Bundle shape::

    v1 (OUT redirected to region 0) ; v2 (region 1)
    compare(0, 1) --equal--> emit region 0, verdict 0
                  --differ-> v3 .. vk ; pairwise compares update per-variant
                             tallies ; first variant with a strict majority
                             is emitted with verdict 1, else verdict 2

Variant OUTs are redirected to memory through the memory-mapped I/O block so
variant code is spliced unchanged; only HALT becomes a jump to the epilogue.
Glue uses r14/r15 while variants run and any register once they have halted.
"""

from __future__ import annotations

import enum
import itertools
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .analysis import Line, from_lines, liveness, regs_of, to_lines
from .errors import NonOddK, RegionOverflow, SimulationFault
from .isa import (
    DEFAULT_CYCLE_LIMIT,
    IO_BASE,
    IO_IN_REWIND,
    IO_OUT_BASE,
    IO_OUT_COUNT,
    IO_OUT_LIMIT,
    Instruction,
    Label,
    Machine,
    Opcode,
    Program,
    execute,
    ins,
    loc,
    parse_program,
    to_signed,
)
from .passes import GLUE_REGS, PassId, apply_pass, derive_seed

REGION_BASE = 0xE000
COUNT_BASE = 0xDF00
TALLY_BASE = 0xDFF0
DEFAULT_REGION_SIZE = 256
MAX_K = 15

VERDICT_CLEAN = 0
VERDICT_TOLERATED = 1
VERDICT_UNTOLERATED = 2

GLUE_PASSES = (PassId.STRENGTH, PassId.IMMSPLIT, PassId.COMMUTE, PassId.BRFLIP, PassId.SCHED, PassId.RENAME)


@dataclass(frozen=True)
class VotePolicy:
    k: int = 3
    eager: int = 2

    def __post_init__(self):
        if self.k < 3 or self.k % 2 == 0:
            raise NonOddK(f"k must be odd and at least 3, got {self.k}")
        if self.k > MAX_K:
            raise ValueError(f"k above {MAX_K} is not supported by the memory layout")
        if self.eager != 2:
            raise ValueError("the eager stage always runs exactly two variants")


@dataclass(frozen=True)
class CompareBlock:
    """A checkpoint: a ``.func`` range or the whole program (``function=None``)."""

    name: str
    function: str | None = None
    start: int = 0
    end: int = 0


def compare_blocks(p: Program) -> list[CompareBlock]:
    """The whole-program block followed by one block per function annotation.

    Bundles checkpoint the whole program's output stream; per-function blocks are
    listed for inspection only.
    """
    blocks = [CompareBlock("program", None, 0, len(p))]
    blocks += [CompareBlock(f.name, f.name, f.start, f.end) for f in p.functions]
    return blocks


@dataclass(frozen=True)
class Layout:
    region_size: int = DEFAULT_REGION_SIZE

    def region(self, i: int) -> int:
        return REGION_BASE + i * self.region_size

    def count(self, i: int) -> int:
        return COUNT_BASE + i

    def tally(self, i: int) -> int:
        return TALLY_BASE + i


# --- glue fragments ------------------------------------------------------------

_CMP_TEMPLATE = """\
LI r0, 0
LW r1, r0, {cx}
LW r2, r0, {cy}
BNE r1, r2, __ne
LI r3, {rx}
LI r4, {ry}
LI r8, 0
loop:
{loop_test}
LW r5, r3, 0
LW r6, r4, 0
{test}
ADDI r3, r3, 1
ADDI r4, r4, 1
{step}
JMP loop
__eq:
HALT
__ne:
HALT
"""

_TESTS = {
    "sub": "SUB r7, r5, r6\nBNE r7, r0, __ne",
    "xor": "XOR r7, r5, r6\nBNE r7, r0, __ne",
    "direct": "BNE r5, r6, __ne",
}
_COUNTING = {
    "down": ("BEQ r1, r8, __eq", "ADDI r1, r1, -1"),
    "up": ("BEQ r8, r1, __eq", "ADDI r8, r8, 1"),
}


def compare_fragment(layout: Layout, x: int, y: int, style: str, direction: str) -> Program:
    """Standalone program that halts at ``__eq`` iff streams x and y are equal."""
    loop_test, step = _COUNTING[direction]
    text = _CMP_TEMPLATE.format(
        cx=layout.count(x), cy=layout.count(y), rx=layout.region(x), ry=layout.region(y),
        loop_test=loop_test, test=_TESTS[style], step=step,
    )
    return parse_program(text, f"cmp{x}{y}")


def emit_fragment(layout: Layout, i: int, verdict: int) -> Program:
    text = f"""\
LI r1, 0
LW r2, r1, {layout.count(i)}
LI r3, {layout.region(i)}
LI r4, 0
emit:
BEQ r4, r2, fin
LW r5, r3, 0
OUT r5
ADDI r3, r3, 1
ADDI r4, r4, 1
JMP emit
fin:
LI r5, {verdict}
OUT r5
HALT
"""
    return parse_program(text, f"emit{i}")


def diversify(fragment: Program, seed: int) -> Program:
    rng = random.Random(seed)
    order = list(GLUE_PASSES)
    rng.shuffle(order)
    for n, pid in enumerate(order):
        fragment = apply_pass(fragment, pid, derive_seed(seed, n, pid.value))
    return fragment


def _skeleton(p: Program) -> tuple:
    """Opcode/register shape of a fragment, ignoring immediates and label names."""
    return tuple((i.opcode, i.regs) for i in p.instructions)


# --- bundle construction ---------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    kind: str  # prologue | variant | epilogue | compare | emit | vote
    index: tuple[int, ...]
    start: int
    end: int

    def contains(self, pc: int) -> bool:
        return self.start <= pc < self.end


class _Builder:
    def __init__(self):
        self.lines: list[Line] = []
        self.pending: list[str] = []
        self.segments: list[Segment] = []
        self._open: tuple[str, tuple[int, ...], int] | None = None

    @property
    def pc(self) -> int:
        return len(self.lines)

    def label(self, name: str) -> None:
        self.pending.append(name)

    def emit(self, instr: Instruction, func: str | None = None) -> None:
        self.lines.append(Line(instr, self.pending, func))
        self.pending = []

    def begin(self, kind: str, *index: int) -> None:
        self._open = (kind, index, self.pc)

    def end(self) -> None:
        kind, index, start = self._open
        self.segments.append(Segment(kind, index, start, self.pc))
        self._open = None

    def splice(
        self,
        p: Program,
        prefix: str,
        exits: dict[str, str] | None = None,
        halt_to: str | None = None,
        keep_functions: bool = False,
    ) -> None:
        exits = exits or {}
        for ln in to_lines(p):
            instr = ln.instr
            sentinel = next((lab for lab in ln.labels if lab in exits), None)
            for lab in ln.labels:
                self.label(prefix + lab)
            if instr.opcode is Opcode.HALT:
                if sentinel is not None:
                    instr = ins("JMP", exits[sentinel])
                elif halt_to is not None:
                    instr = ins("JMP", halt_to)
            elif instr.target is not None:
                ops = tuple(Label(prefix + o.name) if isinstance(o, Label) else o for o in instr.operands)
                instr = Instruction(instr.opcode, ops)
            self.emit(instr, prefix + ln.func if keep_functions and ln.func else None)

    def program(self, name: str) -> Program:
        if self.pending:
            raise ValueError("dangling labels at end of bundle")
        return from_lines(self.lines, name)


@dataclass
class HardenedBundle:
    program: Program
    variants: list[Program]
    policy: VotePolicy
    layout: Layout
    segments: list[Segment]
    compare_fragments: dict[tuple[int, int], Program]
    seed: int
    force_escalate: bool = False
    glue: dict[str, str] = field(default_factory=dict)  # fragment -> style provenance

    @property
    def k(self) -> int:
        return self.policy.k

    def segment(self, kind: str, *index: int) -> Segment:
        for s in self.segments:
            if s.kind == kind and s.index == index:
                return s
        raise KeyError((kind, index))

    def variant_entries(self) -> list[int]:
        return [self.segment("prologue", i).start for i in range(self.k)]

    def first_compare_reading(self, i: int) -> Segment:
        """The first compare fragment (in execution order) that consumes region ``i``."""
        for s in self.segments:
            if s.kind == "compare" and i in s.index:
                return s
        raise KeyError(i)

    @property
    def glue_loc(self) -> int:
        return loc(self.program) - sum(loc(v) for v in self.variants)

    def manifest(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "region_size": self.layout.region_size,
            "regions": [self.layout.region(i) for i in range(self.k)],
            "count_slots": [self.layout.count(i) for i in range(self.k)],
            "variants": [v.name for v in self.variants],
            "segments": [
                {"kind": s.kind, "index": list(s.index), "start": s.start, "end": s.end} for s in self.segments
            ],
            "glue": dict(sorted(self.glue.items())),
            "force_escalate": self.force_escalate,
        }


def _uses_glue_regs(p: Program) -> bool:
    return any(r in GLUE_REGS for i in p.instructions for r in i.regs)


def build_bundle(
    variants: Sequence[Program],
    policy: VotePolicy | None = None,
    seed: int = 0,
    region_size: int = DEFAULT_REGION_SIZE,
    expected_outputs: int | None = None,
    force_escalate: bool = False,
    name: str = "bundle",
) -> HardenedBundle:
    """Integrate ``variants`` (already verified equivalent) into one program.

    ``force_escalate`` makes the eager compare always take the mismatch path,
    which keeps the layout identical and lets every variant be traced.
    """
    policy = policy or VotePolicy(len(variants))
    k = policy.k
    if len(variants) != k:
        raise ValueError(f"policy expects {k} variants, got {len(variants)}")
    if expected_outputs is not None and expected_outputs > region_size:
        raise RegionOverflow(f"{expected_outputs} protected outputs exceed the region size {region_size}")
    for v in variants:
        if _uses_glue_regs(v):
            raise ValueError(f"variant {v.name!r} uses reserved glue registers r14/r15")
    layout = Layout(region_size)
    b = _Builder()
    io = to_signed(IO_BASE)

    def run_variant(i: int) -> None:
        v = variants[i]
        b.begin("prologue", i)
        b.emit(ins("LI", 15, io))
        b.emit(ins("LI", 14, layout.region(i)))
        b.emit(ins("SW", 14, 15, IO_OUT_BASE))
        b.emit(ins("SW", 14, 15, IO_IN_REWIND))
        b.emit(ins("LI", 14, region_size))
        b.emit(ins("SW", 14, 15, IO_OUT_LIMIT))
        # registers the variant reads before writing start from zero, as standalone
        for r in sorted(regs_of(liveness(v)[0][0])) if len(v) else ():
            b.emit(ins("LI", r, 0))
        b.end()
        b.begin("variant", i)
        b.splice(v, f"v{i}_", halt_to=f"v{i}.exit", keep_functions=True)
        b.end()
        b.begin("epilogue", i)
        b.label(f"v{i}.exit")
        b.emit(ins("LW", 14, 15, IO_OUT_COUNT))
        b.emit(ins("SW", 14, 15, to_signed(layout.count(i) - IO_BASE)))
        b.end()

    # compare fragments: one per compared pair, pairwise distinct
    pairs = [(0, 1)] + [(i, j) for i, j in itertools.combinations(range(k), 2) if (i, j) != (0, 1)]
    fragments: dict[tuple[int, int], Program] = {}
    glue: dict[str, str] = {}
    seen: set = set()
    for i, j in pairs:
        attempt = 0
        while True:
            fseed = derive_seed(seed, "compare", i, j, attempt)
            rng = random.Random(fseed)
            style = rng.choice(sorted(_TESTS))
            direction = rng.choice(sorted(_COUNTING))
            frag = diversify(compare_fragment(layout, i, j, style, direction), fseed)
            key = _skeleton(frag)
            if key not in seen or attempt >= 64:
                break
            attempt += 1
        seen.add(key)
        fragments[(i, j)] = frag
        glue[f"cmp{i}_{j}"] = f"{style}/{direction}/attempt{attempt}"

    def compare(i: int, j: int, on_eq: str, on_ne: str) -> None:
        b.begin("compare", i, j)
        b.splice(fragments[(i, j)], f"c{i}_{j}_", exits={"__eq": on_eq, "__ne": on_ne})
        b.end()

    def emit(i: int, verdict: int, tag: str) -> None:
        b.begin("emit", i)
        b.emit(ins("LI", 15, io))
        b.emit(ins("LI", 14, -1))
        b.emit(ins("SW", 14, 15, IO_OUT_BASE))
        frag = diversify(emit_fragment(layout, i, verdict), derive_seed(seed, "emit", tag))
        b.splice(frag, f"e{tag}_")
        b.end()

    run_variant(0)
    run_variant(1)
    compare(0, 1, "escalate" if force_escalate else "accept_clean", "escalate")
    b.label("accept_clean")
    emit(0, VERDICT_CLEAN, "clean")
    b.label("escalate")
    for i in range(2, k):
        run_variant(i)

    b.begin("vote", -1)
    b.emit(ins("LI", 1, 0))
    b.emit(ins("LI", 2, k // 2))
    for i in range(k):
        b.emit(ins("SW", 2, 1, layout.tally(i)))
    b.end()
    for i, j in pairs[1:]:
        compare(i, j, f"agree{i}_{j}", f"next{i}_{j}")
        b.begin("vote", i, j)
        b.label(f"agree{i}_{j}")
        b.emit(ins("LI", 1, 0))
        for t in (i, j):
            b.emit(ins("LW", 2, 1, layout.tally(t)))
            b.emit(ins("ADDI", 2, 2, -1))
            b.emit(ins("SW", 2, 1, layout.tally(t)))
            # the first variant to collect a strict majority is the majority class
            b.emit(ins("BEQ", 2, 1, f"accept{t}"))
        b.label(f"next{i}_{j}")
        b.emit(ins("LI", 1, 0))
        b.end()
    b.begin("vote", k)
    b.emit(ins("LI", 15, io))
    b.emit(ins("LI", 14, -1))
    b.emit(ins("SW", 14, 15, IO_OUT_BASE))
    b.emit(ins("LI", 5, VERDICT_UNTOLERATED))
    b.emit(ins("OUT", 5))
    b.emit(ins("HALT"))
    b.end()
    for i in range(k):
        b.label(f"accept{i}")
        emit(i, VERDICT_TOLERATED, str(i))

    return HardenedBundle(
        b.program(name), list(variants), policy, layout, b.segments, fragments, seed, force_escalate, glue
    )


# --- running ----------------------------------------------------------------------


class Verdict(enum.Enum):
    CLEAN = "Clean"
    DETECTED_TOLERATED = "DetectedTolerated"
    DETECTED_UNTOLERATED = "DetectedUntolerated"
    UNDETECTED_CORRUPTION = "UndetectedCorruption"


@dataclass
class RunReport:
    verdict: Verdict
    verdict_word: int
    accepted: tuple[int, ...]
    variant_outputs: list[tuple[int, ...] | None]
    variants_executed: int
    cycles: int
    golden: tuple[int, ...] | None = None

    @property
    def detected(self) -> bool:
        return self.verdict_word != VERDICT_CLEAN

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "verdict_word": self.verdict_word,
            "accepted": list(self.accepted),
            "variant_outputs": [list(o) if o is not None else None for o in self.variant_outputs],
            "variants_executed": self.variants_executed,
            "cycles": self.cycles,
            "golden": list(self.golden) if self.golden is not None else None,
        }


def _read_variant_outputs(b: HardenedBundle, mem: dict[int, int], executed: list[bool]) -> list:
    outs = []
    for i in range(b.k):
        if not executed[i]:
            outs.append(None)
            continue
        n = min(mem.get(b.layout.count(i), 0), b.layout.region_size)
        base = b.layout.region(i)
        outs.append(tuple(mem.get(base + w, 0) for w in range(n)))
    return outs


def run_bundle(
    b: HardenedBundle,
    inputs: Sequence[int],
    trojans: Sequence = (),
    cycle_limit: int = DEFAULT_CYCLE_LIMIT,
    golden: Sequence[int] | None = None,
    record: bool = False,
):
    """Run the bundle.  Returns a RunReport, or (RunReport, machine) when ``record``.

    The traced machine is used whenever Trojans are given or a trace is requested;
    otherwise the reference interpreter runs the bundle.
    """
    entries = b.variant_entries()
    if trojans or record:
        from .trojan import TracedMachine

        m = TracedMachine(b.program, inputs, trojans=trojans, record=record, watch=entries)
    else:
        m = Machine(b.program, inputs, watch=entries)
    res = m.run(cycle_limit)
    if not res.ok:
        raise SimulationFault(f"bundle run ended with {res.termination.value} {res.fault or ''}".strip(), res)
    if not res.outputs:
        raise SimulationFault("bundle produced no verdict word", res)
    executed = [m.pc_hits[e] > 0 for e in entries]
    word = res.outputs[-1]
    accepted = tuple(res.outputs[:-1])
    verdict = {
        VERDICT_CLEAN: Verdict.CLEAN,
        VERDICT_TOLERATED: Verdict.DETECTED_TOLERATED,
        VERDICT_UNTOLERATED: Verdict.DETECTED_UNTOLERATED,
    }.get(word)
    if verdict is None:
        raise SimulationFault(f"unexpected verdict word {word:#x}", res)
    gold = tuple(golden) if golden is not None else None
    if verdict is Verdict.CLEAN and gold is not None and accepted != gold:
        verdict = Verdict.UNDETECTED_CORRUPTION
    report = RunReport(
        verdict, word, accepted, _read_variant_outputs(b, m.mem, executed), sum(executed), res.cycles, gold
    )
    return (report, m) if record else report


@dataclass(frozen=True)
class Majority:
    value: tuple[int, ...]
    support: int


def majority_vote(outputs: Sequence[Sequence[int]]) -> Majority | None:
    """Whole-stream vote; ``None`` stands for NoMajority."""
    if len(outputs) < 3:
        raise ValueError("majority_vote needs at least three streams")
    counts = Counter(tuple(o) for o in outputs)
    value, support = max(counts.items(), key=lambda kv: kv[1])
    if 2 * support > len(outputs):
        return Majority(value, support)
    return None


# --- overhead ------------------------------------------------------------------------


@dataclass(frozen=True)
class OverheadReport:
    name: str
    loc_original: int
    loc_per_variant: tuple[int, ...]
    loc_integrated: int
    cycles_original: int
    cycles_integrated: int

    @property
    def loc_glue(self) -> int:
        return self.loc_integrated - sum(self.loc_per_variant)

    @property
    def pct_increase(self) -> float:
        return (self.loc_integrated / self.loc_original - 1) * 100

    @property
    def pct_cycle_increase(self) -> float:
        return (self.cycles_integrated / self.cycles_original - 1) * 100

    def row(self) -> dict:
        return {
            "program": self.name,
            "loc_original": self.loc_original,
            "loc_variants": "/".join(map(str, self.loc_per_variant)),
            "loc_glue": self.loc_glue,
            "loc_integrated": self.loc_integrated,
            "pct_loc_increase": f"{self.pct_increase:.2f}",
            "cycles_original": self.cycles_original,
            "cycles_integrated": self.cycles_integrated,
            "pct_cycle_increase": f"{self.pct_cycle_increase:.2f}",
        }


def overhead_report(base: Program, b: HardenedBundle, inputs: Sequence[int], cycle_limit: int = DEFAULT_CYCLE_LIMIT) -> OverheadReport:
    ref = execute(base, inputs, cycle_limit)
    if not ref.ok:
        raise SimulationFault(f"base program ended with {ref.termination.value}", ref)
    rep = run_bundle(b, inputs, cycle_limit=cycle_limit)
    return OverheadReport(
        base.name, loc(base), tuple(loc(v) for v in b.variants), loc(b.program), ref.cycles, rep.cycles
    )
