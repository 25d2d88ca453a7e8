"""Aggregate result directories into summary CSVs and a SUMMARY.md with the
trend checks evaluated from the raw tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean

from .artifacts import find_manifests, read_csv, write_csv
from .experiments import TarSweep

MIN_TAR_FIXTURES = 20
MIN_SPEARMAN_PAIRS = 15
MIN_SIZE_RANGE = 10.0

OVERHEAD_COLUMNS = (
    "program", "loc_original", "loc_variants", "loc_glue", "loc_integrated", "pct_loc_increase",
    "cycles_original", "cycles_integrated", "pct_cycle_increase",
)
RUN_COLUMNS = ("program", "fixture", "verdict", "variants_executed", "outputs_match_golden")
SCENARIO_COLUMNS = (
    "trojan", "trigger_type", "trigger_nets", "payload", "activation", "variant_outputs",
    "detection", "tolerance", "expected", "match",
)
TAR_COLUMNS = ("fixture", "program", "n", "m", "vs", "pair", "k", "sp_max", "T_n", "T_m", "TAR", "mode")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class Report:
    sources: list[Path]
    files: list[Path] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)


def _collect(dirs: list[Path], name: str) -> list[dict]:
    rows = []
    for d in dirs:
        for f in sorted(d.rglob(name)):
            rows.extend(read_csv(f))
    return rows


def overhead_checks(rows: list[dict]) -> list[Check]:
    if not rows:
        return []
    ordered = sorted(rows, key=lambda r: int(r["loc_original"]))
    sizes = [int(r["loc_original"]) for r in ordered]
    pct = [float(r["pct_loc_increase"]) for r in ordered]
    distinct = len(set(sizes)) == len(sizes)
    decreasing = distinct and all(b < a for a, b in zip(pct, pct[1:]))
    span = max(sizes) / min(sizes)
    return [
        Check(
            "overhead trend",
            decreasing and span >= MIN_SIZE_RANGE,
            f"{len(rows)} programs, size range {span:.1f}x, pct LoC increase strictly decreasing: {decreasing}",
        )
    ]


def run_checks(rows: list[dict]) -> list[Check]:
    if not rows:
        return []
    match = sum(r["outputs_match_golden"] == "True" for r in rows)
    two = sum(int(r["variants_executed"]) == 2 for r in rows)
    return [
        Check("clean outputs", match == len(rows), f"{match}/{len(rows)} clean runs return the base program's outputs"),
        Check("clean-path frugality", two == len(rows), f"{two}/{len(rows)} clean runs execute exactly 2 variants"),
    ]


def tar_checks(sweep: TarSweep) -> list[Check]:
    n = len(sweep.complete)
    if n == 0:
        return [Check("TAR sweep", False, "no fixture has TAR defined in every cell")]
    kv = sweep.k_trend_violations()
    sv = sweep.sp_trend_violations()
    rho, pairs = sweep.spearman()
    return [
        Check(
            "TAR non-decreasing in k",
            n >= MIN_TAR_FIXTURES and not kv,
            f"{n} fixtures; steps losing more than 2pp: {[(sp, k, round(d, 2)) for sp, k, d in kv] or 'none'}",
        ),
        Check(
            "TAR at narrower SP range",
            n >= MIN_TAR_FIXTURES and not sv,
            f"{n} fixtures; k with a loss above 2pp: {[(k, round(d, 2)) for k, d in sv] or 'none'}",
        ),
        Check("VS vs TAR rank correlation", pairs >= MIN_SPEARMAN_PAIRS and rho < 0, f"rho={rho:.4f} over {pairs} pairs"),
    ]


def scenario_checks(rows: list[dict]) -> list[Check]:
    if not rows:
        return []
    ok = sum(r["match"] == "True" for r in rows)
    return [Check("scenario table", ok == len(rows) == 9, f"{ok}/{len(rows)} rows match the reference detection/tolerance")]


def _md_table(rows: list[dict], columns) -> list[str]:
    out = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for r in rows:
        out.append("| " + " | ".join(str(r.get(c, "")) for c in columns) + " |")
    return out


def build_report(results: str | Path, out: str | Path | None = None) -> Report:
    results = Path(results)
    out = Path(out) if out is not None else results
    dirs = [d for d, _ in find_manifests(results)]
    rep = Report(dirs)
    md = ["# Summary", "", f"Result directories: {len(dirs)}", ""]

    overhead = sorted(_collect(dirs, "overhead.csv"), key=lambda r: int(r["loc_original"]))
    runs = _collect(dirs, "runs.csv")
    tar_rows = _collect(dirs, "tar_sweep.csv")
    scen = _collect(dirs, "scenarios.csv")
    matrices = [f for d in dirs for f in sorted(d.rglob("*matrix.csv"))]

    if overhead:
        rep.files.append(write_csv(out / "summary_overhead.csv", overhead, OVERHEAD_COLUMNS))
        rep.checks += overhead_checks(overhead)
        md += ["## Overhead", ""] + _md_table(overhead, ("program", "loc_original", "loc_integrated", "pct_loc_increase", "pct_cycle_increase")) + [""]
    if runs:
        rep.files.append(write_csv(out / "summary_runs.csv", runs, RUN_COLUMNS))
        rep.checks += run_checks(runs)
    if matrices:
        vs_rows = []
        for f in matrices:
            rows = read_csv(f)
            names = [r[""] for r in rows]
            off = [float(r[b]) for r in rows for b in names if b != r[""]]
            vs_rows.append({
                "matrix": f.relative_to(results).as_posix() if f.is_relative_to(results) else str(f),
                "programs": len(names),
                "min_vs": f"{min(off):.6f}" if off else "",
                "mean_vs": f"{mean(off):.6f}" if off else "",
                "max_vs": f"{max(off):.6f}" if off else "",
            })
        rep.files.append(write_csv(out / "summary_vs.csv", vs_rows))
    if tar_rows:
        sweep = TarSweep.from_rows(tar_rows)
        trend = sweep.trend_table() if sweep.complete else []
        rep.files.append(write_csv(out / "summary_tar_trend.csv", trend, ("sp_max", "k", "mean_tar", "fixtures")))
        rep.checks += tar_checks(sweep)
        if trend:
            md += ["## Mean TAR by k and SP range", ""] + _md_table(trend, ("sp_max", "k", "mean_tar", "fixtures")) + [""]
    if scen:
        rep.files.append(write_csv(out / "summary_scenarios.csv", scen, SCENARIO_COLUMNS))
        rep.checks += scenario_checks(scen)
        md += ["## Trojan scenarios", ""] + _md_table(scen, ("trojan", "trigger_type", "payload", "activation", "detection", "tolerance", "expected", "match")) + [""]

    md += ["## Checks", ""] + [f"- {c.line()}" for c in rep.checks] + [""]
    summary = out / "SUMMARY.md"
    summary.parent.mkdir(parents=True, exist_ok=True)
    summary.write_text("\n".join(md))
    rep.files.append(summary)
    return rep
