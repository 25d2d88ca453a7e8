"""Control-flow, liveness and a line-level editing view of programs."""

from __future__ import annotations

from dataclasses import dataclass, field

from .isa import BRANCHES, TERMINATORS, Function, Instruction, Opcode, Program, def_use


def successors(p: Program) -> list[tuple[int, ...]]:
    lm = p.label_map
    n = len(p.instructions)
    out = []
    for i, instr in enumerate(p.instructions):
        op = instr.opcode
        if op is Opcode.HALT:
            out.append(())
        elif op is Opcode.JMP:
            out.append((lm[instr.target],))
        elif op in BRANCHES:
            nxt = (i + 1,) if i + 1 < n else ()
            out.append(nxt + (lm[instr.target],))
        else:
            out.append((i + 1,) if i + 1 < n else ())
    return out


def _mask(regs) -> int:
    m = 0
    for r in regs:
        m |= 1 << r
    return m


def liveness(p: Program) -> tuple[list[int], list[int]]:
    """Return (live_in, live_out) register bitmasks per instruction."""
    n = len(p.instructions)
    succ = successors(p)
    du = [def_use(i) for i in p.instructions]
    uses = [_mask(d.uses) for d in du]
    defs = [_mask(d.defs) for d in du]
    live_in = [0] * n
    live_out = [0] * n
    changed = True
    while changed:
        changed = False
        for i in range(n - 1, -1, -1):
            out = 0
            for s in succ[i]:
                out |= live_in[s]
            inn = uses[i] | (out & ~defs[i])
            if out != live_out[i] or inn != live_in[i]:
                live_out[i] = out
                live_in[i] = inn
                changed = True
    return live_in, live_out


def regs_of(mask: int) -> set[int]:
    return {r for r in range(16) if mask >> r & 1}


def basic_blocks(p: Program) -> list[tuple[int, int]]:
    """Half-open ``[start, end)`` ranges of maximal basic blocks."""
    n = len(p.instructions)
    if n == 0:
        return []
    leaders = {0} | {idx for _, idx in p.labels}
    for i, instr in enumerate(p.instructions):
        if instr.opcode in TERMINATORS and i + 1 < n:
            leaders.add(i + 1)
    for f in p.functions:
        leaders.add(f.start)
        if f.end < n:
            leaders.add(f.end)
    starts = sorted(leaders)
    return [(s, e) for s, e in zip(starts, starts[1:] + [n])]


def in_cycle(p: Program) -> list[bool]:
    """True for instructions that lie on some CFG cycle."""
    succ = successors(p)
    n = len(succ)
    # Tarjan SCC, iterative
    index = [0] * n
    low = [0] * n
    seen = [False] * n
    on_stack = [False] * n
    stack: list[int] = []
    result = [False] * n
    counter = 1
    for root in range(n):
        if seen[root]:
            continue
        work = [(root, 0)]
        while work:
            v, k = work.pop()
            if k == 0:
                seen[v] = True
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            if k < len(succ[v]):
                work.append((v, k + 1))
                w = succ[v][k]
                if not seen[w]:
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                if len(comp) > 1 or v in succ[v]:
                    for w in comp:
                        result[w] = True
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return result


@dataclass
class Line:
    """One instruction with the labels that precede it and its function tag."""

    instr: Instruction
    labels: list[str] = field(default_factory=list)
    func: str | None = None


def to_lines(p: Program) -> list[Line]:
    func_of: dict[int, str] = {}
    for f in p.functions:
        for i in range(f.start, f.end):
            func_of[i] = f.name
    return [
        Line(instr, list(p.labels_at.get(i, ())), func_of.get(i))
        for i, instr in enumerate(p.instructions)
    ]


def from_lines(lines: list[Line], name: str = "program") -> Program:
    labels = []
    functions = []
    cur: str | None = None
    start = 0
    for i, ln in enumerate(lines):
        labels.extend((lab, i) for lab in ln.labels)
        if ln.func != cur:
            if cur is not None:
                functions.append(Function(cur, start, i))
            cur, start = ln.func, i
    if cur is not None:
        functions.append(Function(cur, start, len(lines)))
    return Program(tuple(ln.instr for ln in lines), tuple(labels), tuple(functions), name=name)


def fresh_label(taken: set[str], stem: str = "_L") -> str:
    i = 0
    while f"{stem}{i}" in taken:
        i += 1
    name = f"{stem}{i}"
    taken.add(name)
    return name
