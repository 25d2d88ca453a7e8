from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vforge import corpus
from vforge.errors import NonOddK, RegionOverflow
from vforge.experiments import harden_program
from vforge.harness import (
    Verdict,
    VotePolicy,
    build_bundle,
    compare_blocks,
    majority_vote,
    overhead_report,
    run_bundle,
)
from vforge.isa import execute, format_program, loc, parse_program


def const_prog(values, name="p"):
    body = "".join(f"LI r1, {v}\nOUT r1\n" for v in values)
    return parse_program(body + "HALT", name)


def test_single_out_clean_path():
    vs = [const_prog([5], f"v{i}") for i in range(3)]
    b = build_bundle(vs, VotePolicy(3))
    r = execute(b.program)
    assert r.outputs == (5, 0)
    rep = run_bundle(b, [])
    assert rep.verdict is Verdict.CLEAN and rep.variants_executed == 2 and rep.accepted == (5,)


def test_divergent_first_variant_is_outvoted():
    vs = [const_prog([6], "bad"), const_prog([5], "b"), const_prog([5], "c")]
    rep = run_bundle(build_bundle(vs), [], golden=[5])
    assert rep.verdict is Verdict.DETECTED_TOLERATED
    assert rep.variants_executed == 3 and rep.accepted == (5,)
    assert rep.variant_outputs == [(6,), (5,), (5,)]


def test_all_distinct_is_untolerated():
    vs = [const_prog([v], f"v{v}") for v in (1, 2, 3)]
    rep = run_bundle(build_bundle(vs), [], golden=[3])
    assert rep.verdict is Verdict.DETECTED_UNTOLERATED and rep.variants_executed == 3


def test_identical_corruption_is_undetected():
    vs = [const_prog([9], "a"), const_prog([9], "b"), const_prog([5], "c")]
    rep = run_bundle(build_bundle(vs), [], golden=[5])
    assert rep.verdict is Verdict.UNDETECTED_CORRUPTION
    assert rep.variants_executed == 2 and rep.variant_outputs[2] is None


def test_tea_bundle_matches_golden(tea, passdb):
    _, b = harden_program(tea.program, tea.fixtures, passdb)
    for f in tea.fixtures:
        rep = run_bundle(b, f)
        assert rep.verdict is Verdict.CLEAN and rep.variants_executed == 2
        assert rep.accepted == execute(tea.program, f).outputs


def test_policy_validation():
    with pytest.raises(NonOddK):
        VotePolicy(4)
    with pytest.raises(NonOddK):
        VotePolicy(1)
    with pytest.raises(ValueError):
        build_bundle([const_prog([1])] * 3, VotePolicy(5))


def test_region_overflow():
    with pytest.raises(RegionOverflow):
        build_bundle([const_prog([1])] * 3, region_size=4, expected_outputs=5)
    # too many outputs at run time faults the machine
    b = build_bundle([const_prog(range(6), f"v{i}") for i in range(3)], region_size=4)
    r = execute(b.program)
    assert r.fault == "RegionOverflow"


def test_reserved_registers_rejected():
    p = parse_program("LI r14, 1\nOUT r14\nHALT")
    with pytest.raises(ValueError):
        build_bundle([p] * 3)


def test_majority_vote():
    X, Y, Z = (1, 2), (3,), (4, 4)
    assert majority_vote([X, X, Y]).value == X
    assert majority_vote([X, Y, Z]) is None
    assert majority_vote([X, Y, X, X, Y]).value == X
    assert majority_vote([X, Y, X, Y, Z]) is None
    with pytest.raises(ValueError):
        majority_vote([X, X])


def test_compare_fragments_are_distinct(tea, passdb):
    _, b = harden_program(tea.program, tea.fixtures, passdb, k=5)
    texts = [format_program(f) for f in b.compare_fragments.values()]
    assert len(texts) == 10 and len(set(texts)) == 10


def test_compare_blocks(tea):
    blocks = compare_blocks(tea.program)
    assert blocks[0].function is None and blocks[0].end == len(tea.program)
    assert [b.function for b in blocks[1:]] == [f.name for f in tea.program.functions]


def test_force_escalate_runs_everything(tea, passdb):
    _, b = harden_program(tea.program, tea.fixtures, passdb)
    forced = build_bundle(b.variants, b.policy, seed=b.seed, force_escalate=True)
    rep = run_bundle(forced, tea.fixtures[0])
    assert rep.variants_executed == 3 and rep.verdict is Verdict.DETECTED_TOLERATED
    assert rep.accepted == execute(tea.program, tea.fixtures[0]).outputs
    assert len(forced.program) == len(build_bundle(b.variants, b.policy, seed=b.seed).program)


def test_overhead_identity():
    base = const_prog([1, 2, 3])
    vs = [base.with_name(f"v{i}") for i in range(3)]
    b = build_bundle(vs)
    rep = overhead_report(base, b, [])
    L, G = loc(base), rep.loc_glue
    assert rep.loc_integrated >= sum(rep.loc_per_variant)
    assert rep.pct_increase == pytest.approx(((3 * L + G) / L - 1) * 100)
    assert rep.cycles_integrated > rep.cycles_original


def test_overhead_falls_with_size():
    small = const_prog(range(10))
    large = const_prog(range(200))
    # identical glue: the emitted OUT count only affects the region contents
    small_b = build_bundle([small.with_name(f"s{i}") for i in range(3)])
    large_b = build_bundle([large.with_name(f"l{i}") for i in range(3)])
    rs, rl = overhead_report(small, small_b, []), overhead_report(large, large_b, [])
    assert rs.loc_glue == rl.loc_glue
    assert rs.pct_increase > rl.pct_increase


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([3, 5, 7]).flatmap(lambda k: st.lists(st.integers(0, 2), min_size=k, max_size=k)))
def test_vote_matches_reference(labels):
    """Variant i outputs value labels[i]; the bundle's verdict follows the policy."""
    k = len(labels)
    vs = [const_prog([100 + v], f"v{i}") for i, v in enumerate(labels)]
    rep = run_bundle(build_bundle(vs, VotePolicy(k)), [])
    outs = [(100 + v,) for v in labels]
    if outs[0] == outs[1]:
        assert rep.verdict is Verdict.CLEAN and rep.variants_executed == 2 and rep.accepted == outs[0]
        return
    assert rep.variants_executed == k
    maj = majority_vote(outs)
    if maj is None:
        assert rep.verdict is Verdict.DETECTED_UNTOLERATED
    else:
        assert rep.verdict is Verdict.DETECTED_TOLERATED and rep.accepted == maj.value


@pytest.mark.parametrize("name", corpus.names())
def test_bundle_equivalence_on_fixtures(name, passdb):
    e = corpus.load(name)
    _, b = harden_program(e.program, e.fixtures, passdb)
    for f in e.fixtures:
        rep = run_bundle(b, f)
        assert rep.accepted == execute(e.program, f).outputs
        assert rep.variants_executed == 2
