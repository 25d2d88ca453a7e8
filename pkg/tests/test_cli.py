from __future__ import annotations

import json
import shutil

import pytest

from vforge import corpus
from vforge.artifacts import load_bundle, read_csv
from vforge.cli import WorkspaceConfig, ConfigError, main, parse_ks, parse_vectors
from vforge.isa import execute, format_program

SMALL = "checksum,fib,gcd"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def tea_files(tmp_path, tea):
    base = tmp_path / "tea.s"
    base.write_text(format_program(tea.program))
    inputs = tmp_path / "inputs.json"
    inputs.write_text(json.dumps([list(f) for f in tea.fixtures]))
    return base, inputs


@pytest.fixture
def tea_bundle(tmp_path, capsys, tea_files):
    base, inputs = tea_files
    pool = tmp_path / "pool"
    code, _, _ = run(capsys, "variants", "gen", str(base), "--seeds", "2", "--inputs", str(inputs), "--out", str(pool))
    assert code == 0
    bundle = tmp_path / "bundle.s"
    code, _, _ = run(capsys, "harden", str(base), "--variants", str(pool), "--k", "3", "--inputs", str(inputs), "--out", str(bundle))
    assert code == 0
    return bundle, inputs


def test_parse_helpers(tmp_path):
    assert parse_ks("4..8") == [4, 5, 6, 7, 8] and parse_ks("4,6") == [4, 6]
    f = tmp_path / "v.txt"
    f.write_text("# comment\n1 2 0x10\n3,4,5\n")
    assert parse_vectors(f) == [(1, 2, 16), (3, 4, 5)]
    f.write_text("[1, 2]")
    assert parse_vectors(f) == [(1, 2)]
    f.write_text("")
    with pytest.raises(ConfigError):
        parse_vectors(f)


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 3, "bogus": 1}))
    with pytest.raises(ConfigError):
        WorkspaceConfig.load(str(cfg))
    cfg.write_text(json.dumps({"seed": 3}))
    assert WorkspaceConfig.load(str(cfg)).seed == 3


def test_asm_check(capsys, tmp_path):
    good = tmp_path / "g.s"
    good.write_text("LI r1, 5\nOUT r1\nHALT\n")
    bad = tmp_path / "b.s"
    bad.write_text("ADD r1, r2\nHALT\n")
    assert run(capsys, "asm", "check", str(good))[0] == 0
    code, _, err = run(capsys, "asm", "check", str(bad))
    assert code == 1 and "ADD" in err


def test_vs_score_and_matrix(capsys, tmp_path):
    a = tmp_path / "a.s"
    a.write_text("ADD r1, r2, r3\nADD r1, r2, r3\nHALT\n")
    b = tmp_path / "b.s"
    b.write_text("ADD r1, r2, r3\nHALT\n")
    code, out, _ = run(capsys, "vs", "score", "--a", str(a), "--b", str(b))
    assert code == 0 and "raw 3" in out
    code, out, _ = run(capsys, "vs", "score", "--a", str(a), "--b", str(a), "--opcode-only")
    assert "normalized 1" in out
    code, out, _ = run(capsys, "vs", "matrix", str(tmp_path))
    assert out.splitlines()[0] == ",a,b" and out.splitlines()[1].startswith("a,1.000000,")


def test_variants_select_harden_run(capsys, tmp_path, tea, tea_bundle):
    bundle, inputs = tea_bundle
    pool = tmp_path / "pool"
    assert (pool / "pool.json").exists() and (pool / "matrix.csv").exists()
    assert (pool / "manifest.json").exists()
    code, out, _ = run(capsys, "select", str(pool), "--k", "3")
    assert code == 0 and len(json.loads(out)["chosen"]) == 3
    assert bundle.exists() and bundle.with_suffix(".json").exists()
    code, out, _ = run(capsys, "run", str(bundle), "--inputs", str(inputs))
    reps = json.loads(out)
    assert code == 0 and [r["verdict"] for r in reps] == ["Clean", "Clean"]
    assert reps[0]["accepted"] == list(execute(tea.program, tea.fixtures[0]).outputs)
    assert reps[0]["variants_executed"] == 2


def test_harden_rejects_divergent_variant(capsys, tmp_path, tea_files):
    base, inputs = tea_files
    vdir = tmp_path / "vs"
    vdir.mkdir()
    text = base.read_text()
    (vdir / "ok.s").write_text(text)
    (vdir / "bad.s").write_text(text.replace("LI r8, 32", "LI r8, 31"))
    code, _, err = run(capsys, "harden", str(base), "--variants", str(vdir), "--k", "3", "--inputs", str(inputs), "--out", str(tmp_path / "b.s"))
    assert code == 2 and "bad" in err


def test_trojan_inject(capsys, tmp_path, tea_bundle):
    bundle, _ = tea_bundle
    spec = tmp_path / "t.json"
    # HALT and ADD are never decoded in the same cycle
    spec.write_text(json.dumps({"name": "never", "trigger": {"type": "combinational", "nets": ["op_HALT", "op_ADD"]},
                                "payload": {"kind": "alu_bit", "bit": 0}}))
    vec = tmp_path / "one.json"
    vec.write_text(json.dumps(list(corpus.load("tea").fixtures[0])))
    code, out, _ = run(capsys, "trojan", "inject", "--spec", str(spec), "--bundle", str(bundle), "--inputs", str(vec))
    res = json.loads(out)
    assert code == 0 and res["activation"] == "0/0/0" and not res["detected"] and res["tolerated"]


def test_trojan_inject_bad_spec(capsys, tmp_path, tea_bundle):
    bundle, inputs = tea_bundle
    spec = tmp_path / "t.json"
    spec.write_text(json.dumps({"trigger": {"type": "weird"}, "payload": {"kind": "alu_bit"}}))
    code, _, err = run(capsys, "trojan", "inject", "--spec", str(spec), "--bundle", str(bundle), "--inputs", str(inputs))
    assert code == 1 and "invalid Trojan spec" in err


def test_tar_command(capsys, tmp_path, tea_bundle):
    bundle, inputs = tea_bundle
    out = tmp_path / "tar.csv"
    code, _, _ = run(capsys, "tar", "--bundle", str(bundle), "--inputs", str(inputs), "--k", "4..5",
                     "--sp-max", "0.05", "--sp-min", "0.001", "--cap", "2000", "--csv", str(out))
    rows = read_csv(out)
    assert code == 0 and len(rows) == 6 * 2
    assert list(rows[0])[:6] == ["pair", "k", "sp_max", "T_n", "T_m", "TAR"]
    assert (tmp_path / "manifest.json").exists()


def test_run_dump_trace(capsys, tmp_path, tea_bundle):
    bundle, inputs = tea_bundle
    dump = tmp_path / "trace.txt"
    assert run(capsys, "run", str(bundle), "--inputs", str(inputs), "--dump-trace", str(dump))[0] == 0
    lines = dump.read_text().splitlines()
    assert len(lines[0].split()) == 120 and all(len(ln) == 120 for ln in lines[1:])
    # the saved bundle reloads into the identical program
    b = load_bundle(bundle)
    assert format_program(b.program) == bundle.read_text()


def test_simulation_fault_exit(capsys, tmp_path, tea_bundle):
    bundle, _ = tea_bundle
    short = tmp_path / "short.json"
    short.write_text("[1, 2]")
    code, _, err = run(capsys, "run", str(bundle), "--inputs", str(short))
    assert code == 3 and "InputExhausted" in err


def test_empty_corpus(capsys, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"corpus_dir": str(empty)}))
    code, _, err = run(capsys, "--config", str(cfg), "--out", str(tmp_path / "o"), "pipeline")
    assert code == 1 and "no programs found" in err


def test_pipeline_is_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "--out", str(a), "pipeline", "--programs", SMALL)[0] == 0
    assert run(capsys, "--out", str(b), "pipeline", "--programs", SMALL)[0] == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"] and ma["config"]["seed"] == 0
    assert (a / "overhead.csv").read_bytes() == (b / "overhead.csv").read_bytes()
    # replaying the recorded command regenerates identical bytes
    shutil.rmtree(a)
    assert main(ma["command"]) == 0
    capsys.readouterr()
    assert json.loads((a / "manifest.json").read_text())["outputs"] == ma["outputs"]
    runs = read_csv(b / "runs.csv")
    assert {r["variants_executed"] for r in runs} == {"2"}


def test_seed_changes_results(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(capsys, "--out", str(a), "pipeline", "--programs", "gcd")
    run(capsys, "--seed", "5", "--out", str(b), "pipeline", "--programs", "gcd")
    assert (a / "gcd" / "bundle.s").read_text() != (b / "gcd" / "bundle.s").read_text()


def test_report(capsys, tmp_path):
    res = tmp_path / "res"
    run(capsys, "--out", str(res), "pipeline", "--programs", SMALL)
    code, out, _ = run(capsys, "report", str(res), "--out", str(tmp_path / "rep"))
    assert code == 0
    assert "PASS clean outputs" in out and "PASS clean-path frugality" in out
    assert (tmp_path / "rep" / "SUMMARY.md").exists()
    rows = read_csv(tmp_path / "rep" / "summary_overhead.csv")
    sizes = [int(r["loc_original"]) for r in rows]
    assert len(rows) == 3 and sizes == sorted(sizes)
    code, _, err = run(capsys, "report", str(tmp_path / "nothing"))
    assert code == 1 and "manifest" in err
