"""Semantics-preserving transformation passes over VR32 programs.

Every pass takes a program and a ``random.Random`` and returns a new program
whose observable output stream is identical for every input.  A pass that
finds no applicable site returns the program unchanged.  Registers r14/r15 are
reserved for bundle glue: no pass introduces them and RENAME never moves them.
"""

from __future__ import annotations

import enum
import hashlib
import random
from typing import Callable, Sequence

from .analysis import Line, basic_blocks, fresh_label, from_lines, liveness, to_lines
from .isa import (
    BRANCHES,
    TERMINATORS,
    Instruction,
    Label,
    MemEffect,
    Opcode,
    Program,
    Reg,
    def_use,
    ins,
    to_signed,
)

GLUE_REGS = (14, 15)
ALLOCATABLE = tuple(r for r in range(16) if r not in GLUE_REGS)
COMMUTATIVE = (Opcode.ADD, Opcode.AND, Opcode.OR, Opcode.XOR, Opcode.MUL)

SITE_PROB = 0.5
PAD_GROWTH_CAP = 0.10


class PassId(enum.Enum):
    RENAME = "RENAME"
    SCHED = "SCHED"
    COMMUTE = "COMMUTE"
    STRENGTH = "STRENGTH"
    IMMSPLIT = "IMMSPLIT"
    BRFLIP = "BRFLIP"
    PADPAIR = "PADPAIR"


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from an arbitrary tuple of printable parts."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def _replace_regs(instr: Instruction, mapping: dict[int, int]) -> Instruction:
    ops = tuple(Reg(mapping.get(o.index, o.index)) if isinstance(o, Reg) else o for o in instr.operands)
    return Instruction(instr.opcode, ops)


def rename_registers(p: Program, mapping: dict[int, int]) -> Program:
    """Apply a register permutation everywhere (defs, uses, I/O operands)."""
    if sorted(mapping) != sorted(mapping.values()):
        raise ValueError("register mapping must be a permutation")
    instrs = tuple(_replace_regs(i, mapping) for i in p.instructions)
    return Program(instrs, p.labels, p.functions, name=p.name)


def rename_pass(p: Program, rng: random.Random) -> Program:
    perm = list(ALLOCATABLE)
    rng.shuffle(perm)
    return rename_registers(p, dict(zip(ALLOCATABLE, perm)))


# --- scheduling --------------------------------------------------------------


def _depends(a, b) -> bool:
    """True when ``b`` (later) must stay after ``a`` (earlier)."""
    if a.defs & b.uses or a.uses & b.defs or a.defs & b.defs:
        return True
    if a.mem is MemEffect.WRITE and b.mem is not MemEffect.NONE:
        return True
    if a.mem is MemEffect.READ and b.mem is MemEffect.WRITE:
        return True
    return a.io and b.io


def dependence_preds(instrs: Sequence[Instruction]) -> list[set[int]]:
    """Direct predecessors of each instruction in the block's dependence DAG.

    Only the nearest conflicting accesses are linked; the transitive closure is
    the same ordering relation as pairwise ``_depends``.
    """
    last_def: dict[int, int] = {}
    readers: dict[int, list[int]] = {}
    last_store: int | None = None
    loads: list[int] = []
    last_io: int | None = None
    preds: list[set[int]] = []
    for j, instr in enumerate(instrs):
        d = def_use(instr)
        ps: set[int] = set()
        for r in d.uses:
            if r in last_def:
                ps.add(last_def[r])
        for r in d.defs:
            if r in last_def:
                ps.add(last_def[r])
            ps.update(readers.get(r, ()))
        if d.mem is not MemEffect.NONE and last_store is not None:
            ps.add(last_store)
        if d.mem is MemEffect.WRITE:
            ps.update(loads)
        if d.io and last_io is not None:
            ps.add(last_io)
        for r in d.uses:
            readers.setdefault(r, []).append(j)
        for r in d.defs:
            last_def[r] = j
            readers[r] = []
        if d.mem is MemEffect.WRITE:
            last_store, loads = j, []
        elif d.mem is MemEffect.READ:
            loads.append(j)
        if d.io:
            last_io = j
        ps.discard(j)
        preds.append(ps)
    return preds


def schedule_block(instrs: list[Instruction], rng: random.Random) -> list[Instruction]:
    """Seeded list scheduling: a random topological order of the dependence DAG."""
    n = len(instrs)
    deps = dependence_preds(instrs)
    preds = [len(ps) for ps in deps]
    succs: list[list[int]] = [[] for _ in range(n)]
    for j, ps in enumerate(deps):
        for i in ps:
            succs[i].append(j)
    ready = [i for i in range(n) if preds[i] == 0]
    order = []
    while ready:
        k = ready.pop(rng.randrange(len(ready)))
        order.append(k)
        for s in succs[k]:
            preds[s] -= 1
            if preds[s] == 0:
                ready.append(s)
        ready.sort()
    return [instrs[k] for k in order]


def sched_pass(p: Program, rng: random.Random) -> Program:
    lines = to_lines(p)
    for start, end in basic_blocks(p):
        body_end = end
        if p.instructions[end - 1].opcode in TERMINATORS:
            body_end = end - 1
        if body_end - start < 2:
            continue
        new = schedule_block([lines[i].instr for i in range(start, body_end)], rng)
        for off, instr in enumerate(new):
            lines[start + off].instr = instr
    return from_lines(lines, p.name)


# --- commute -----------------------------------------------------------------


def commute_pass(p: Program, rng: random.Random) -> Program:
    out = []
    for instr in p.instructions:
        if instr.opcode in COMMUTATIVE:
            rd, a, b = instr.operands
            if a != b and rng.random() < SITE_PROB:
                instr = Instruction(instr.opcode, (rd, b, a))
        out.append(instr)
    return Program(tuple(out), p.labels, p.functions, name=p.name)


# --- strength ----------------------------------------------------------------


def _dead_temps(live_out: int, exclude: set[int]) -> list[int]:
    return [r for r in ALLOCATABLE if not live_out >> r & 1 and r not in exclude]


def strength_pass(p: Program, rng: random.Random) -> Program:
    """Rewrite among equivalent forms.

    MOV rd,rs <-> ADDI rd,rs,0 <-> OR/AND rd,rs,rs; ADD rd,rs,rs <-> SLL by a
    register known to hold 1; XOR/SUB rd,rs,rs <-> LI rd,0; ADDI <-> LI tmp + ADD
    when a dead temporary exists.
    """
    if not p.instructions:
        return p
    _, live_out = liveness(p)
    lines = to_lines(p)
    block_of = {}
    for bi, (s, e) in enumerate(basic_blocks(p)):
        for i in range(s, e):
            block_of[i] = bi
    out: list[Line] = []
    consts: dict[int, int] = {}  # reg -> known value within the current block
    cur_block = -1
    i = 0
    n = len(lines)
    while i < n:
        ln = lines[i]
        if block_of[i] != cur_block:
            cur_block = block_of[i]
            consts = {}
        instr = ln.instr
        op = instr.opcode
        regs = instr.regs
        repl: list[Instruction] | None = None
        consumed = 1
        take = rng.random() < SITE_PROB

        if op is Opcode.MOV and take:
            rd, rs = regs
            repl = [rng.choice([ins("ADDI", rd, rs, 0), ins("OR", rd, rs, rs), ins("AND", rd, rs, rs)])]
        elif op is Opcode.ADDI and instr.imm == 0 and take:
            rd, rs = regs
            repl = [rng.choice([ins("MOV", rd, rs), ins("OR", rd, rs, rs)])]
        elif op in (Opcode.OR, Opcode.AND) and regs[1] == regs[2] and take:
            rd, rs, _ = regs
            repl = [rng.choice([ins("MOV", rd, rs), ins("ADDI", rd, rs, 0)])]
        elif op in (Opcode.XOR, Opcode.SUB) and regs[1] == regs[2] and take:
            repl = [ins("LI", regs[0], 0)]
        elif op is Opcode.LI and instr.imm == 0 and take:
            rd = regs[0]
            repl = [rng.choice([ins("XOR", rd, rd, rd), ins("SUB", rd, rd, rd)])]
        elif op is Opcode.ADD and regs[1] == regs[2] and take:
            rd, rs, _ = regs
            ones = [r for r, v in consts.items() if v == 1 and r != rd]
            if ones:
                repl = [ins("SLL", rd, rs, rng.choice(ones))]
            else:
                temps = _dead_temps(live_out[i], {rs})
                if temps:
                    t = rng.choice(temps)
                    repl = [ins("LI", t, 1), ins("SLL", rd, rs, t)]
        elif op is Opcode.SLL and consts.get(regs[2]) == 1 and take:
            rd, rs, _ = regs
            repl = [ins("ADD", rd, rs, rs)]
        elif op is Opcode.ADDI and take:
            rd, rs = regs
            temps = _dead_temps(live_out[i], {rs})
            if rd != rs:
                temps = sorted(set(temps) | {rd})
            if temps:
                t = rng.choice(temps)
                repl = [ins("LI", t, instr.imm), ins("ADD", rd, rs, t)]
        elif (
            op is Opcode.LI
            and take
            and i + 1 < n
            and not lines[i + 1].labels
            and lines[i + 1].instr.opcode is Opcode.ADD
        ):
            t = regs[0]
            nxt = lines[i + 1].instr
            rd, ra, rb = nxt.regs
            # LI t,K ; ADD rd,rs,t  ->  ADDI rd,rs,K   (t dead afterwards or overwritten)
            if ra != rb and t in (ra, rb):
                rs = rb if ra == t else ra
                if rs != t and (not live_out[i + 1] >> t & 1 or t == rd):
                    repl = [ins("ADDI", rd, rs, instr.imm)]
                    consumed = 2

        new_instrs = repl if repl is not None else [instr]
        for k, ni in enumerate(new_instrs):
            out.append(Line(ni, ln.labels if k == 0 else [], ln.func))
        # constants describe the rewritten code, not the original
        for ni in new_instrs:
            for d in def_use(ni).defs:
                consts.pop(d, None)
            if ni.opcode is Opcode.LI:
                consts[ni.regs[0]] = ni.imm & 0xFFFFFFFF
        i += consumed
    return from_lines(out, p.name)


# --- immediate splitting -----------------------------------------------------


def immsplit_pass(p: Program, rng: random.Random) -> Program:
    lines = to_lines(p)
    out: list[Line] = []
    i = 0
    n = len(lines)
    while i < n:
        ln = lines[i]
        instr = ln.instr
        if instr.opcode is Opcode.LI and rng.random() < SITE_PROB:
            rd = instr.regs[0]
            nxt = lines[i + 1] if i + 1 < n else None
            if (
                nxt is not None
                and not nxt.labels
                and nxt.instr.opcode is Opcode.ADDI
                and nxt.instr.regs == (rd, rd)
                and rng.random() < 0.5
            ):
                merged = to_signed(instr.imm + nxt.instr.imm)
                out.append(Line(ins("LI", rd, merged), ln.labels, ln.func))
                i += 2
                continue
            d = 0
            while d == 0:
                d = rng.randint(-0x7FFF, 0x7FFF)
            out.append(Line(ins("LI", rd, to_signed(instr.imm - d)), ln.labels, ln.func))
            out.append(Line(ins("ADDI", rd, rd, d), [], ln.func))
            i += 1
            continue
        out.append(ln)
        i += 1
    return from_lines(out, p.name)


# --- branch flipping ---------------------------------------------------------

_FLIP = {Opcode.BEQ: Opcode.BNE, Opcode.BNE: Opcode.BEQ}


def brflip_pass(p: Program, rng: random.Random) -> Program:
    lines = to_lines(p)
    taken = {name for name, _ in p.labels}
    out: list[Line] = []
    i = 0
    n = len(lines)
    while i < n:
        ln = lines[i]
        instr = ln.instr
        if instr.opcode not in BRANCHES or i + 1 >= n or rng.random() >= SITE_PROB:
            out.append(ln)
            i += 1
            continue
        a, b, target = instr.operands
        flipped = _FLIP[instr.opcode]
        nxt = lines[i + 1]
        if nxt.instr.opcode is Opcode.JMP and not nxt.labels:
            jmp_target = nxt.instr.operands[0]
            if i + 2 < n and target.name in lines[i + 2].labels:
                # Bcc a,b,F ; JMP L ; F:  ->  B!cc a,b,L ; F:
                out.append(Line(Instruction(flipped, (a, b, jmp_target)), ln.labels, ln.func))
            else:
                # Bcc a,b,L ; JMP M  ->  B!cc a,b,M ; JMP L
                out.append(Line(Instruction(flipped, (a, b, jmp_target)), ln.labels, ln.func))
                out.append(Line(Instruction(Opcode.JMP, (target,)), [], nxt.func))
            i += 2
            continue
        # Bcc a,b,L ; <fallthrough F>  ->  B!cc a,b,F ; JMP L ; F:
        if not nxt.labels:
            nxt.labels.append(fresh_label(taken))
        out.append(Line(Instruction(flipped, (a, b, Label(nxt.labels[0]))), ln.labels, ln.func))
        out.append(Line(Instruction(Opcode.JMP, (target,)), [], ln.func))
        i += 1
    return from_lines(out, p.name)


# --- padding -----------------------------------------------------------------


def _neutral_pair(t: int, rng: random.Random) -> list[Instruction]:
    k = rng.randint(-0x7FFF, 0x7FFF)
    s = rng.choice(ALLOCATABLE)
    choice = rng.randrange(4)
    if choice == 0:
        return [ins("LI", t, k), ins("ADDI", t, t, rng.randint(-0x7FFF, 0x7FFF))]
    if choice == 1:
        return [ins("MOV", t, s), ins("XOR", t, t, s)]
    if choice == 2:
        return [ins("ADDI", t, s, k), ins("SUB", t, t, s)]
    return [ins("LI", t, k), ins("MUL", t, t, t)]


def padpair_pass(p: Program, rng: random.Random) -> Program:
    n = len(p.instructions)
    max_pairs = int(n * PAD_GROWTH_CAP) // 2
    if max_pairs == 0:
        return p
    live_in, _ = liveness(p)
    sites = [i for i in range(n) if _dead_temps(live_in[i], set())]
    if not sites:
        return p
    count = rng.randint(1, max_pairs)
    chosen = set(rng.sample(sites, min(count, len(sites))))
    out: list[Line] = []
    for i, ln in enumerate(to_lines(p)):
        if i in chosen:
            t = rng.choice(_dead_temps(live_in[i], set()))
            pair = _neutral_pair(t, rng)
            # labels stay on the original instruction; the pair is reached by fallthrough only
            out.extend(Line(x, [], ln.func) for x in pair)
        out.append(ln)
    return from_lines(out, p.name)


PASSES: dict[PassId, Callable[[Program, random.Random], Program]] = {
    PassId.RENAME: rename_pass,
    PassId.SCHED: sched_pass,
    PassId.COMMUTE: commute_pass,
    PassId.STRENGTH: strength_pass,
    PassId.IMMSPLIT: immsplit_pass,
    PassId.BRFLIP: brflip_pass,
    PassId.PADPAIR: padpair_pass,
}


def apply_pass(p: Program, pass_id: PassId | str, seed: int) -> Program:
    pid = PassId(pass_id) if isinstance(pass_id, str) else pass_id
    return PASSES[pid](p, random.Random(seed))
