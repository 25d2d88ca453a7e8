"""Nine constructed Trojan scenarios on a hardened TEA bundle, one per row of the
reference detection/tolerance table.

Each scenario fixes a trigger style, a payload kind, the variants in which the
Trojan must activate and how the variant outputs must be corrupted.  A trigger
meeting those conditions is searched for on the clean net trace; detection and
tolerance are then read from the harness, never used as search filters.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .harness import HardenedBundle, RunReport, VotePolicy, build_bundle, run_bundle
from .errors import SimulationFault
from .isa import execute
from .trojan import (
    ALU_NONE,
    ALU_PASSA,
    ALUOP_BASE,
    NETS,
    Combinational,
    Outcome,
    Payload,
    Sequential,
    Step,
    TracedMachine,
    TrojanSpec,
    activation_mask,
    classify_outcome,
    net_mask,
)

# how the variant outputs must look after the Trojan ran
CORRUPT_FIRST = "first"  # v1 wrong, every other executed variant right
IDENTICAL = "identical"  # v1 and v2 wrong in the same way
DIFFERING = "differing"  # v1 and v2 wrong in different ways, v3 right
BENIGN_FIRST = "benign-first"  # v1 right despite firing, v2 wrong, v3 right

_PAYLOAD_BITS = {"select": (0,), "imm_bit": (0, 1, 2, 4, 8, 16, 31), "aluop_bit": (0, 1, 2, 3, 4)}
_MAX_NETS = 12


@dataclass(frozen=True)
class Scenario:
    name: str
    trigger_type: str  # combinational | sequential
    payload_kind: str
    activation: tuple[bool, bool, bool]
    corruption: str
    detected: bool  # reference outcome
    tolerated: bool


TABLE = (
    Scenario("T1", "combinational", "select", (True, False, False), CORRUPT_FIRST, True, True),
    Scenario("T2", "sequential", "imm_bit", (True, False, False), CORRUPT_FIRST, True, True),
    Scenario("T3", "sequential", "aluop_bit", (True, False, False), CORRUPT_FIRST, True, True),
    Scenario("T4", "sequential", "select", (True, False, False), CORRUPT_FIRST, True, True),
    Scenario("T5", "combinational", "imm_bit", (True, True, False), IDENTICAL, False, False),
    Scenario("T6", "sequential", "imm_bit", (True, True, False), DIFFERING, True, False),
    Scenario("T7", "sequential", "aluop_bit", (True, True, False), DIFFERING, True, False),
    Scenario("T8", "sequential", "select", (True, True, False), BENIGN_FIRST, True, True),
    Scenario("T9", "combinational", "select", (True, True, False), BENIGN_FIRST, True, True),
)


@dataclass
class ScenarioResult:
    scenario: Scenario
    trojan: TrojanSpec | None = None
    report: RunReport | None = None
    outcome: Outcome | None = None
    attempts: int = 0

    @property
    def found(self) -> bool:
        return self.outcome is not None

    @property
    def matches(self) -> bool:
        o = self.outcome
        return o is not None and (o.detected, o.tolerated) == (self.scenario.detected, self.scenario.tolerated)

    def row(self) -> dict:
        s, o, r = self.scenario, self.outcome, self.report
        yn = lambda v: "Yes" if v else "No"  # noqa: E731
        outs = []
        if r is not None:
            for i, v in enumerate(r.variant_outputs):
                outs.append(f"V{i + 1}:" + ("-" if v is None else " ".join(f"{w:08X}" for w in v)))
        return {
            "trojan": s.name,
            "trigger_type": s.trigger_type,
            "trigger_nets": "" if self.trojan is None else _describe(self.trojan),
            "payload": s.payload_kind if self.trojan is None else f"{s.payload_kind}[{self.trojan.payload.bit}]",
            "activation": "" if o is None else o.mask_str(),
            "variant_outputs": " | ".join(outs),
            "detection": "" if o is None else yn(o.detected),
            "tolerance": "" if o is None else yn(o.tolerated),
            "expected": f"{yn(s.detected)}/{yn(s.tolerated)}",
            "match": self.matches,
            "attempts": self.attempts,
        }


def _describe(t: TrojanSpec) -> str:
    tr = t.trigger
    if isinstance(tr, Combinational):
        return "+".join(tr.nets)
    return " -> ".join("+".join(f"{n}={v}" for n, v in s.to_json().items()) for s in tr.steps)


@dataclass
class ScenarioSuite:
    bundle: HardenedBundle
    inputs: tuple[int, ...]
    golden: tuple[int, ...]
    results: list[ScenarioResult] = field(default_factory=list)

    @property
    def all_match(self) -> bool:
        return len(self.results) == len(TABLE) and all(r.matches for r in self.results)

    def rows(self) -> list[dict]:
        return [r.row() for r in self.results]


# --- trigger construction ---------------------------------------------------------------


class _TraceIndex:
    """Clean all-variant trace of the bundle with per-cycle variant ownership."""

    def __init__(self, forced: HardenedBundle, inputs: Sequence[int]):
        m = TracedMachine(forced.program, inputs, record=True)
        res = m.run()
        if not res.ok:
            raise RuntimeError(f"clean traced run ended with {res.termination.value}")
        self.rows = m.rows
        segs = [forced.segment("variant", i) for i in range(forced.k)]
        self.owner = []
        for pc in m.pcs:
            self.owner.append(next((i for i, s in enumerate(segs) if s.contains(pc)), None))
        self.by_variant = {i: [c for c, o in enumerate(self.owner) if o == i] for i in range(forced.k)}
        ones = [0] * len(NETS)
        for r in self.rows:
            for j in range(len(NETS)):
                ones[j] += (r >> j) & 1
        self.ones = ones

    def exact_mask(self, targets: Sequence[int], exclude: Iterable[int] | None = None) -> int | None:
        """A small net set that is all-1 at every target cycle and at none of the
        ``exclude`` cycles (default: every other cycle); None if no such set exists."""
        common = -1
        for c in targets:
            common &= self.rows[c]
        if exclude is None:
            tset = set(targets)
            exclude = (c for c in range(len(self.rows)) if c not in tset)
        others = [self.rows[c] for c in exclude]
        if any(r & common == common for r in others):
            return None
        nets = [j for j in range(len(NETS)) if (common >> j) & 1]
        mask = 0
        remaining = others
        while remaining:
            if bin(mask).count("1") >= _MAX_NETS:
                return None
            # the net that rules out the most still-matching cycles, rarer first on ties
            best = min(nets, key=lambda j: (sum((r >> j) & 1 for r in remaining), self.ones[j], j))
            mask |= 1 << best
            remaining = [r for r in remaining if r & mask == mask]
        return mask


_BRANCH_NETS = net_mask(["op_BEQ", "op_BNE", "op_JMP"])


def _inert(kind: str, row: int) -> bool:
    """True when a payload of ``kind`` provably cannot change this cycle's effect.

    Only the operand-select inversion is analysed: it is inert on non-branch
    instructions whose ALU ignores operand b.
    """
    if kind != "select":
        return False
    aluop = (row >> ALUOP_BASE) & 0x1F
    return not row & _BRANCH_NETS and aluop in (ALU_NONE, ALU_PASSA)


def _candidate_triggers(idx: _TraceIndex, sc: Scenario, rng: random.Random) -> Iterator[object]:
    v1, v2 = idx.by_variant[0], idx.by_variant[1]
    n = len(idx.rows)
    if sc.activation == (True, False, False):
        cycles = list(v1)
        rng.shuffle(cycles)
        for c in cycles:
            if sc.trigger_type == "combinational":
                m = idx.exact_mask([c])
                if m is not None:
                    yield Combinational(m)
            else:
                # arm on an earlier cycle of v1, fire on c; the firing step must
                # not recur once armed
                earlier = [a for a in v1 if a < c]
                if not earlier:
                    continue
                a = rng.choice(earlier)
                arm = idx.exact_mask([a])
                fire = idx.exact_mask([c], (x for x in range(a + 1, n) if x != c))
                if arm is not None and fire is not None:
                    yield Sequential((Step(arm, arm), Step(fire, fire)))
    else:
        # pair cycles of v1 and v2 that look alike on the nets; the trigger may
        # match elsewhere inside v1 and v2 but nowhere else
        inside = set(v1) | set(v2)
        outside = [c for c in range(n) if c not in inside]
        if sc.corruption == BENIGN_FIRST:
            # harmless on the v1 side, effective on the v2 side
            v1 = [c for c in v1 if _inert(sc.payload_kind, idx.rows[c])]
            v2 = [c for c in v2 if not _inert(sc.payload_kind, idx.rows[c])]
        pairs = []
        for c1 in v1:
            r1 = idx.rows[c1]
            for c2 in v2:
                pairs.append((-bin(r1 & idx.rows[c2]).count("1"), c1, c2))
        pairs.sort()
        inside_rows = [idx.rows[c] for c in sorted(inside)]
        ranked = []
        for order, (_, c1, c2) in enumerate(pairs[:4000]):
            fire = idx.exact_mask([c1, c2], outside)
            if fire is not None:
                # fewest clean-trace firings first: a one-shot trigger per variant
                hits = sum(1 for r in inside_rows if r & fire == fire)
                ranked.append((hits, rng.random(), fire))
        ranked.sort()
        arm = Step.of({"op_IN": 1})
        for _, _, fire in ranked:
            if sc.trigger_type == "combinational":
                yield Combinational(fire)
            else:
                yield Sequential((arm, Step(fire, fire)))


def _corruption_ok(kind: str, outs: list, golden: tuple[int, ...]) -> bool:
    v1, v2 = outs[0], outs[1]
    v3 = outs[2] if len(outs) > 2 else None
    if kind == CORRUPT_FIRST:
        return v1 != golden and v2 == golden and all(o is None or o == golden for o in outs[2:])
    if kind == IDENTICAL:
        return v1 == v2 != golden
    if kind == DIFFERING:
        return v1 != golden and v2 != golden and v1 != v2 and v3 == golden
    if kind == BENIGN_FIRST:
        return v1 == golden and v2 != golden and v3 == golden
    raise ValueError(kind)


def search_scenario(
    bundle: HardenedBundle,
    idx: _TraceIndex,
    inputs: Sequence[int],
    golden: tuple[int, ...],
    sc: Scenario,
    seed: int = 0,
    max_attempts: int = 3000,
) -> ScenarioResult:
    rng = random.Random(f"{seed}:{sc.name}")
    result = ScenarioResult(sc)
    segs = [bundle.segment("variant", i) for i in range(bundle.k)]
    # a corrupted loop bound can spin for long; the clean run of all variants is the yardstick
    cycle_limit = 4 * len(idx.rows)
    for trig in _candidate_triggers(idx, sc, rng):
        for bit in _PAYLOAD_BITS[sc.payload_kind]:
            if result.attempts >= max_attempts:
                return result
            result.attempts += 1
            tj = TrojanSpec(trig, Payload(sc.payload_kind, bit), sc.name)
            try:
                report, m = run_bundle(bundle, inputs, [tj], cycle_limit, golden=golden, record=True)
            except SimulationFault:  # corrupted control flow; not a usable scenario
                continue
            fired_pcs = [pc for _, pc in m.fired[0]]
            if not fired_pcs or not all(any(s.contains(pc) for s in segs) for pc in fired_pcs):
                continue
            act = activation_mask(bundle, m)
            if act != sc.activation:
                continue
            if not _corruption_ok(sc.corruption, report.variant_outputs, golden):
                continue
            result.trojan, result.report = tj, report
            result.outcome = classify_outcome(report, golden, act)
            return result
    return result


def run_suite(
    variants: Sequence,
    inputs: Sequence[int],
    seed: int = 0,
    scenarios: Sequence[Scenario] = TABLE,
) -> ScenarioSuite:
    """Build the k=3 bundle from ``variants`` and search every scenario on it."""
    golden = execute(variants[0], inputs).outputs
    bundle = build_bundle(variants, VotePolicy(3), seed=seed, expected_outputs=len(golden), name="scenario_bundle")
    forced = build_bundle(
        variants, VotePolicy(3), seed=seed, expected_outputs=len(golden), force_escalate=True, name="scenario_bundle"
    )
    idx = _TraceIndex(forced, inputs)
    suite = ScenarioSuite(bundle, tuple(inputs), tuple(golden))
    for sc in scenarios:
        suite.results.append(search_scenario(bundle, idx, inputs, tuple(golden), sc, seed))
    return suite

