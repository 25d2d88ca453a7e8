"""Seeded experiment sweeps: Trigger Avoidance Rate over variant pairs and
code-size/runtime overhead over the corpus."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from statistics import mean
from typing import Sequence

from scipy.stats import spearmanr

from .errors import NoCandidateNets
from .harness import HardenedBundle, OverheadReport, VotePolicy, build_bundle, overhead_report, run_bundle
from .isa import Program, execute
from .passes import derive_seed
from .similarity import build_signature, variant_similarity
from .trojan import NetTraceMatrix, TarEntry, enumerate_triggers, tar
from .variants import CandidatePool, PassSequence, default_tests, generate_pool, select_variants

DEFAULT_KS = (4, 5, 6, 7, 8)
DEFAULT_SP_MAXES = (0.05, 0.025)
DEFAULT_SP_MIN = 0.001
TAR_PROGRAMS = ("tea_unrolled", "xtea16", "xorshift", "oaat")


# --- TAR ---------------------------------------------------------------------------


def variant_windows(b: HardenedBundle, trace: NetTraceMatrix, i: int) -> tuple[NetTraceMatrix, NetTraceMatrix]:
    """(code-only window, code plus its first compare fragment) of variant ``i``."""
    code = b.segment("variant", i)
    cmp = b.first_compare_reading(i)
    own = trace.window([(code.start, code.end)], variant=i, compare=False)
    with_cmp = trace.window([(code.start, code.end), (cmp.start, cmp.end)], variant=i, compare=True)
    return own, with_cmp


def bundle_trace(b: HardenedBundle, inputs: Sequence[int]) -> NetTraceMatrix:
    """Trace of a run that executes every variant (the bundle must force escalation)."""
    if not b.force_escalate:
        raise ValueError("tracing all variants needs a bundle built with force_escalate=True")
    _, m = run_bundle(b, inputs, record=True)
    return m.trace


def tar_for_bundle(
    b: HardenedBundle,
    inputs: Sequence[int],
    ks: Sequence[int] = DEFAULT_KS,
    sp_maxes: Sequence[float] = DEFAULT_SP_MAXES,
    sp_min: float = DEFAULT_SP_MIN,
    cap: int = 200_000,
    seed: int = 0,
) -> list[TarEntry]:
    """TAR for every ordered pair of variants in the bundle, every k and SP range.

    Pairs without any candidate net get T_n = T_m = 0 (reported as NA).
    """
    trace = bundle_trace(b, inputs)
    windows = [variant_windows(b, trace, i) for i in range(b.k)]
    out = []
    for n, m in itertools.permutations(range(b.k), 2):
        for sp_max in sp_maxes:
            for k in ks:
                pair = f"{n}>{m}"
                try:
                    ts = enumerate_triggers(windows[n][0], k, (sp_min, sp_max), cap, derive_seed(seed, n, k, sp_max))
                except NoCandidateNets:
                    out.append(TarEntry(pair, k, sp_max, 0, 0, "none"))
                    continue
                out.append(tar(windows[n][0], windows[m][1], ts, pair))
    return out


@dataclass
class TarFixture:
    """One seeded (program, ordered variant pair) fixture: triggers from variant
    ``n``, re-checked on variant ``m`` plus its compare fragment."""

    fixture: str
    program: str
    n: str
    m: str
    vs: float
    entries: list[TarEntry] = field(default_factory=list)

    def cell(self, k: int, sp_max: float) -> float | None:
        for e in self.entries:
            if e.k == k and e.sp_max == sp_max:
                return e.tar
        return None

    def complete(self, ks: Sequence[int], sp_maxes: Sequence[float]) -> bool:
        return all(self.cell(k, s) is not None for k in ks for s in sp_maxes)

    def summary_tar(self, ks: Sequence[int], sp_maxes: Sequence[float]) -> float:
        return mean(self.cell(k, s) for k in ks for s in sp_maxes)


@dataclass
class TarSweep:
    fixtures: list[TarFixture]
    ks: tuple[int, ...]
    sp_maxes: tuple[float, ...]

    @property
    def complete(self) -> list[TarFixture]:
        """Fixtures whose TAR is defined (T_n > 0) in every (k, sp_max) cell."""
        return [f for f in self.fixtures if f.complete(self.ks, self.sp_maxes)]

    def mean_tar(self, k: int, sp_max: float) -> float:
        return mean(f.cell(k, sp_max) for f in self.complete)

    def trend_table(self) -> list[dict]:
        n = len(self.complete)
        return [
            {"sp_max": sp, "k": k, "mean_tar": f"{self.mean_tar(k, sp):.2f}", "fixtures": n}
            for sp in self.sp_maxes
            for k in self.ks
        ]

    def k_trend_violations(self, slack: float = 2.0) -> list[tuple[float, int, float]]:
        """(sp_max, k, drop) for every step k-1 -> k whose mean TAR drops by more than ``slack``."""
        bad = []
        for sp in self.sp_maxes:
            vals = [self.mean_tar(k, sp) for k in self.ks]
            for k, a, b in zip(self.ks[1:], vals, vals[1:]):
                if b < a - slack:
                    bad.append((sp, k, a - b))
        return bad

    def sp_trend_violations(self, slack: float = 2.0) -> list[tuple[int, float]]:
        """(k, drop) where the narrower SP range loses more than ``slack`` against the wider one."""
        hi, lo = max(self.sp_maxes), min(self.sp_maxes)
        out = []
        for k in self.ks:
            d = self.mean_tar(k, hi) - self.mean_tar(k, lo)
            if d > slack:
                out.append((k, d))
        return out

    def spearman(self) -> tuple[float, int]:
        """Rank correlation of normalized VS against each fixture's mean TAR over all cells."""
        comp = self.complete
        xs = [f.vs for f in comp]
        ys = [f.summary_tar(self.ks, self.sp_maxes) for f in comp]
        if len(set(xs)) < 2 or len(set(ys)) < 2:
            return math.nan, len(comp)  # undefined for constant input
        return float(spearmanr(xs, ys).statistic), len(comp)

    @classmethod
    def from_rows(cls, rows: Sequence[dict]) -> "TarSweep":
        """Rebuild a sweep from its raw CSV rows (see ``rows``)."""
        fixtures: dict[tuple, TarFixture] = {}
        ks, sps = set(), set()
        for r in rows:
            key = (r["fixture"], r["n"], r["m"])
            if key not in fixtures:
                fixtures[key] = TarFixture(r["fixture"], r["program"], r["n"], r["m"], float(r["vs"]))
            k, sp = int(r["k"]), float(r["sp_max"])
            ks.add(k)
            sps.add(sp)
            fixtures[key].entries.append(TarEntry(r["pair"], k, sp, int(r["T_n"]), int(r["T_m"]), r["mode"]))
        return cls(list(fixtures.values()), tuple(sorted(ks)), tuple(sorted(sps, reverse=True)))

    def rows(self) -> list[dict]:
        return [
            {"fixture": f.fixture, "program": f.program, "n": f.n, "m": f.m, "vs": f"{f.vs:.6f}", **e.row()}
            for f in self.fixtures
            for e in f.entries
        ]


def tar_sweep(
    programs: Sequence[tuple[Program, Sequence[Sequence[int]]]],
    db: Sequence[PassSequence],
    fixtures_per_program: int = 5,
    pool_seeds: int = 8,
    master_seed: int = 0,
    ks: Sequence[int] = DEFAULT_KS,
    sp_maxes: Sequence[float] = DEFAULT_SP_MAXES,
    sp_min: float = DEFAULT_SP_MIN,
    cap: int = 5000,
) -> TarSweep:
    """For each program, build ``fixtures_per_program`` bundles from seeded random
    triples of its candidate pool and measure TAR on every ordered variant pair.

    Random triples (rather than the most diverse selection) spread the pairs over
    a range of similarity values.
    """
    out: list[TarFixture] = []
    for prog, inputs in programs:
        n_inputs = len(inputs[0])
        pool = generate_pool(prog, db, pool_seeds, master_seed, default_tests(n_inputs, inputs, seed=master_seed))
        progs = pool.programs()
        for f in range(fixtures_per_program):
            fseed = derive_seed(master_seed, "tar-fixture", prog.name, f)
            triple = random.Random(fseed).sample(progs, 3)
            b = build_bundle(triple, VotePolicy(3), seed=fseed, force_escalate=True)
            entries = tar_for_bundle(b, inputs[0], ks, sp_maxes, sp_min, cap, fseed)
            sigs = [build_signature(p) for p in triple]
            for x, y in itertools.permutations(range(3), 2):
                vs = float(variant_similarity(sigs[x], sigs[y]).normalized)
                mine = [e for e in entries if e.pair == f"{x}>{y}"]
                out.append(TarFixture(f"{prog.name}#{f}", prog.name, triple[x].name, triple[y].name, vs, mine))
    return TarSweep(out, tuple(ks), tuple(sp_maxes))


# --- overhead --------------------------------------------------------------------------


@dataclass
class OverheadSweep:
    reports: list[OverheadReport]

    def strictly_decreasing(self) -> bool:
        ordered = sorted(self.reports, key=lambda r: r.loc_original)
        sizes = [r.loc_original for r in ordered]
        if len(set(sizes)) != len(sizes):
            return False
        pct = [r.pct_increase for r in ordered]
        return all(b < a for a, b in zip(pct, pct[1:]))

    @property
    def size_range(self) -> float:
        sizes = [r.loc_original for r in self.reports]
        return max(sizes) / min(sizes)


def harden_program(
    prog: Program,
    fixtures: Sequence[Sequence[int]],
    db: Sequence[PassSequence],
    k: int = 3,
    pool_seeds: int = 8,
    master_seed: int = 0,
    n_inputs: int | None = None,
) -> tuple[CandidatePool, HardenedBundle]:
    n = n_inputs if n_inputs is not None else len(fixtures[0])
    pool = generate_pool(prog, db, pool_seeds, master_seed, default_tests(n, fixtures, seed=master_seed))
    sel = select_variants(pool, k)
    outs = max(len(execute(prog, f).outputs) for f in fixtures)
    b = build_bundle(sel.chosen, VotePolicy(k), seed=master_seed, expected_outputs=outs, name=f"{prog.name}_bundle")
    return pool, b


def overhead_sweep(
    programs: Sequence[tuple[Program, Sequence[Sequence[int]]]],
    db: Sequence[PassSequence],
    k: int = 3,
    pool_seeds: int = 8,
    master_seed: int = 0,
) -> OverheadSweep:
    reports = []
    for prog, fixtures in programs:
        _, b = harden_program(prog, fixtures, db, k, pool_seeds, master_seed)
        reports.append(overhead_report(prog, b, fixtures[0]))
    return OverheadSweep(reports)
