from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from vforge.artifacts import write_csv
from vforge.experiments import OverheadSweep, TarFixture, TarSweep
from vforge.harness import OverheadReport
from vforge.report import build_report, overhead_checks, tar_checks
from vforge.trojan import TarEntry

KS = (4, 5)
SPS = (0.05, 0.025)


def fixture(name, vs, counts):
    """counts: {(k, sp): (T_n, T_m)}"""
    entries = [TarEntry("0>1", k, sp, tn, tm) for (k, sp), (tn, tm) in counts.items()]
    return TarFixture(name, "p", "a", "b", vs, entries)


def full(name, vs, tar_by_cell):
    return fixture(name, vs, {cell: (100, 100 - t) for cell, t in tar_by_cell.items()})


def test_complete_and_means():
    a = full("a", 0.2, {(4, 0.05): 10, (5, 0.05): 20, (4, 0.025): 30, (5, 0.025): 40})
    b = full("b", 0.4, {(4, 0.05): 0, (5, 0.05): 10, (4, 0.025): 10, (5, 0.025): 20})
    na = fixture("c", 0.1, {(4, 0.05): (0, 0), (5, 0.05): (5, 1), (4, 0.025): (5, 1), (5, 0.025): (5, 1)})
    s = TarSweep([a, b, na], KS, SPS)
    assert s.complete == [a, b]
    assert s.mean_tar(4, 0.05) == 5 and s.mean_tar(5, 0.025) == 30
    assert s.k_trend_violations() == [] and s.sp_trend_violations() == []
    rho, n = s.spearman()
    assert n == 2 and rho == pytest.approx(-1.0)


def test_trend_violations():
    a = full("a", 0.2, {(4, 0.05): 30, (5, 0.05): 20, (4, 0.025): 25, (5, 0.025): 19})
    s = TarSweep([a], KS, SPS)
    assert s.k_trend_violations() == [(0.05, 5, 10.0), (0.025, 5, 6.0)]
    assert s.sp_trend_violations() == [(4, 5.0)]
    # within slack
    b = full("b", 0.2, {(4, 0.05): 21, (5, 0.05): 20, (4, 0.025): 20, (5, 0.025): 20})
    assert TarSweep([b], KS, SPS).k_trend_violations() == []


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.lists(st.integers(0, 100), min_size=4, max_size=4)), min_size=3, max_size=12))
def test_rows_round_trip_and_spearman(data):
    cells = [(k, sp) for sp in SPS for k in KS]
    fx = [full(f"f{i}", round(vs, 6), dict(zip(cells, ts))) for i, (vs, ts) in enumerate(data)]
    s = TarSweep(fx, KS, SPS)
    back = TarSweep.from_rows([{k: str(v) for k, v in r.items()} for r in s.rows()])
    assert back.ks == KS and back.sp_maxes == SPS
    for k, sp in cells:
        assert back.mean_tar(k, sp) == pytest.approx(s.mean_tar(k, sp), abs=1e-9)
    xs, ys = [f.vs for f in fx], [sum(f.cell(*c) for c in cells) / 4 for f in fx]
    got, n = s.spearman()
    assert n == len(fx)
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        assert math.isnan(got)
    else:
        assert got == pytest.approx(spearmanr(xs, ys).statistic)


def test_overhead_sweep():
    mk = lambda n, L, glue: OverheadReport(n, L, (L, L, L), 3 * L + glue, 10, 30)
    s = OverheadSweep([mk("a", 10, 200), mk("b", 100, 200), mk("c", 1000, 200)])
    assert s.strictly_decreasing() and s.size_range == 100
    assert not OverheadSweep([mk("a", 10, 200), mk("b", 10, 200)]).strictly_decreasing()
    (check,) = overhead_checks([r.row() for r in s.reports])
    assert check.passed


def test_tar_checks_need_enough_fixtures():
    cells = {(k, sp): 10 * k for sp in SPS for k in KS}
    few = TarSweep([full(f"f{i}", i / 10, cells) for i in range(5)], KS, SPS)
    checks = {c.name: c.passed for c in tar_checks(few)}
    assert not checks["TAR non-decreasing in k"] and not checks["VS vs TAR rank correlation"]
    assert not tar_checks(TarSweep([], KS, SPS))[0].passed


def test_build_report_from_raw_tables(tmp_path):
    res = tmp_path / "res"
    res.mkdir()
    (res / "manifest.json").write_text("{}")
    cells = [(k, sp) for sp in SPS for k in KS]
    fx = [full(f"f{i}", 0.1 + i / 100, {c: 50 - i + c[0] for c in cells}) for i in range(25)]
    write_csv(res / "tar" / "tar_sweep.csv", TarSweep(fx, KS, SPS).rows())
    rep = build_report(res)
    lines = [c.line() for c in rep.checks]
    assert lines[0].startswith("PASS TAR non-decreasing in k")
    assert "PASS VS vs TAR rank correlation: rho=-1.0000 over 25 pairs" in lines
    assert (res / "SUMMARY.md").read_text().count("| 0.05 |") == 2
