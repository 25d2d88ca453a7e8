"""``vforge`` command line: parse, generate variants, score, select, harden, run,
inject Trojans, measure TAR, report and the full pipeline.

Exit status: 0 success, 1 configuration or input error, 2 equivalence failure,
3 simulation fault.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from . import corpus
from .artifacts import ExperimentManifest, load_bundle, save_bundle, sha256_file, write_csv, write_json
from .errors import AsmError, InsufficientCandidates, MissingManifest, NonOddK, RegionOverflow, SimulationFault, VForgeError
from .experiments import TAR_PROGRAMS, tar_for_bundle, tar_sweep
from .harness import VotePolicy, build_bundle, overhead_report, run_bundle
from .isa import count_inputs, execute, format_program, loc, parse_program
from .similarity import build_signature, matrix_csv, pairwise_matrix, variant_similarity
from .trojan import DEFAULT_CAP, TrojanSpec, activation_mask, classify_outcome
from .variants import check_equivalence, default_tests, generate_pool, load_passdb, select_variants

EXIT_OK, EXIT_CONFIG, EXIT_EQUIVALENCE, EXIT_SIMULATION = 0, 1, 2, 3


class ConfigError(VForgeError):
    pass


class EquivalenceFailure(VForgeError):
    pass


@dataclass
class WorkspaceConfig:
    corpus_dir: str | None = None  # None: bundled corpus
    passdb: str | None = None  # None: bundled pass database
    seed: int = 0
    k: int = 3
    pool_seeds: int = 8
    sp_maxes: list[float] = field(default_factory=lambda: [0.05, 0.025])
    sp_min: float = 0.001
    ks: list[int] = field(default_factory=lambda: [4, 5, 6, 7, 8])
    cap: int = DEFAULT_CAP  # single-bundle `tar`
    sweep_cap: int = 5000  # per-cell cap inside the TAR sweep
    fixtures_per_program: int = 5
    tar_programs: list[str] = field(default_factory=lambda: list(TAR_PROGRAMS))
    scenario_program: str = "tea"
    out: str = "results"

    @classmethod
    def load(cls, path: str | None) -> "WorkspaceConfig":
        if path is None:
            return cls()
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


# --- input files --------------------------------------------------------------------------


def parse_vectors(path: str | Path) -> list[tuple[int, ...]]:
    """Input vectors from JSON (a list of ints, or a list of lists) or text
    (one vector per line, integers separated by spaces or commas)."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = None
    if data is not None:
        if isinstance(data, list) and all(isinstance(v, int) for v in data):
            return [tuple(data)]
        if isinstance(data, list) and all(isinstance(v, list) for v in data):
            return [tuple(int(x) for x in v) for v in data]
        raise ConfigError(f"{path}: expected a list of integers or a list of lists")
    vecs = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            try:
                vecs.append(tuple(int(tok, 0) for tok in re.split(r"[,\s]+", line) if tok))
            except ValueError as e:
                raise ConfigError(f"{path}: {e}") from e
    if not vecs:
        raise ConfigError(f"{path}: no input vectors")
    return vecs


def parse_ks(text: str) -> list[int]:
    m = re.fullmatch(r"(\d+)\.\.(\d+)", text)
    if m:
        return list(range(int(m.group(1)), int(m.group(2)) + 1))
    return [int(t) for t in text.split(",")]


def read_program(path: str | Path):
    path = Path(path)
    try:
        return parse_program(path.read_text(), path.stem)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e


def read_dir(path: str | Path) -> list:
    path = Path(path)
    if not path.is_dir():
        raise ConfigError(f"{path} is not a directory")
    progs = [read_program(f) for f in sorted(path.glob("*.s"))]
    if not progs:
        raise ConfigError(f"no programs found in {path}")
    return progs


def _tests_for(prog, fixtures: Sequence[Sequence[int]], seed: int) -> list[tuple[int, ...]]:
    n = len(fixtures[0]) if fixtures else count_inputs(prog)
    return default_tests(n, fixtures, seed=seed)


def _settings(args) -> WorkspaceConfig:
    cfg = WorkspaceConfig.load(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _manifest(args, cfg: WorkspaceConfig) -> ExperimentManifest:
    return ExperimentManifest(list(args.argv), asdict(cfg))


def _emit(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


# --- subcommands --------------------------------------------------------------------------


def cmd_asm_check(args) -> int:
    for f in args.files:
        p = read_program(f)
        print(f"{f}: ok, {loc(p)} instructions, {len(p.functions)} functions, {count_inputs(p)} inputs")
    return EXIT_OK


def cmd_variants_gen(args) -> int:
    cfg = _settings(args)
    base = read_program(args.file)
    db = load_passdb(args.db or cfg.passdb)
    fixtures = parse_vectors(args.inputs) if args.inputs else []
    pool = generate_pool(base, db, args.seeds or cfg.pool_seeds, cfg.seed, _tests_for(base, fixtures, cfg.seed))
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    entries = []
    for c in pool.candidates:
        sub = out if c.verdict.ok else out / "divergent"
        sub.mkdir(exist_ok=True)
        f = sub / f"{c.name}.s"
        f.write_text(format_program(c.program))
        written.append(f)
        entries.append({
            "name": c.name,
            "sequence": c.sequence.name,
            "passes": [p.value for p in c.sequence.passes],
            "seed": c.seed,
            "verdict": c.verdict.verdict.value,
            "witness": list(c.verdict.witness) if c.verdict.witness else None,
            "detail": c.verdict.detail,
            "duplicates": [list(d) for d in c.duplicates],
            "file": f.relative_to(out).as_posix(),
            "sha256": sha256_file(f),
        })
    progs = pool.programs()
    matrix = out / "matrix.csv"
    matrix.write_text(matrix_csv([p.name for p in progs], pairwise_matrix(progs)))
    written.append(matrix)
    written.append(write_json(out / "pool.json", {
        "base": base.name,
        "master_seed": cfg.seed,
        "generated": pool.generated,
        "candidates": entries,
        "matrix": "matrix.csv",
    }))
    m = _manifest(args, cfg)
    m.add_input(args.file)
    m.write(out, written)
    bad = [c.name for c in pool.candidates if not c.verdict.ok]
    print(f"{len(pool.eligible)} equivalent variants, {len(bad)} divergent, {pool.generated} generated -> {out}")
    if bad:
        print(f"error: divergent variants: {', '.join(bad)}", file=sys.stderr)
        return EXIT_EQUIVALENCE
    return EXIT_OK


def cmd_vs_score(args) -> int:
    a, b = read_program(args.a), read_program(args.b)
    s = variant_similarity(build_signature(a), build_signature(b), args.opcode_only)
    print(f"raw {s.raw}")
    print(f"normalized {s.normalized} ({float(s.normalized):.6f})")
    return EXIT_OK


def cmd_vs_matrix(args) -> int:
    progs = read_dir(args.dir)
    text = matrix_csv([p.name for p in progs], pairwise_matrix(progs, args.opcode_only))
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_select(args) -> int:
    progs = read_dir(args.dir)
    if args.base:
        progs = [read_program(args.base).with_name("base")] + progs
    sel = select_variants(progs, args.k, args.opcode_only)
    _emit({"chosen": sel.names, "objective": str(sel.objective), "objective_float": float(sel.objective)})
    return EXIT_OK


def cmd_harden(args) -> int:
    cfg = _settings(args)
    base = read_program(args.base)
    cands = read_dir(args.variants)
    fixtures = parse_vectors(args.inputs) if args.inputs else []
    tests = _tests_for(base, fixtures, cfg.seed)
    ref = [execute(base, v) for v in tests]
    for c in cands:
        eq = check_equivalence(base, c, tests, reference=ref)
        if not eq.ok:
            raise EquivalenceFailure(f"{c.name} diverges from {base.name}: {eq.detail} on {list(eq.witness or ())}")
    k = args.k or cfg.k
    sel = select_variants([base.with_name("base")] + cands, k)
    outs = max(len(r.outputs) for r in ref)
    b = build_bundle(sel.chosen, VotePolicy(k), seed=cfg.seed, expected_outputs=outs, name=f"{base.name}_bundle")
    target = Path(args.out or Path(cfg.out) / "bundle.s")
    written = save_bundle(b, target)
    m = _manifest(args, cfg)
    m.add_input(args.base)
    m.add_input(args.variants)
    m.write(target.parent, written)
    print(f"{target}: k={k}, variants {', '.join(sel.names)}, {loc(b.program)} instructions")
    return EXIT_OK


def _load_trojans(path: str) -> list[TrojanSpec]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("trojans", [data])
    try:
        return [TrojanSpec.from_json(d) for d in data]
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"{path}: invalid Trojan spec: {e}") from e


def cmd_run(args) -> int:
    b = load_bundle(args.bundle)
    trojans = _load_trojans(args.trojans) if args.trojans else []
    goldens = parse_vectors(args.golden) if args.golden else None
    reports = []
    for n, vec in enumerate(parse_vectors(args.inputs)):
        gold = goldens[min(n, len(goldens) - 1)] if goldens else None
        if args.dump_trace:
            rep, m = run_bundle(b, vec, trojans, golden=gold, record=True)
            Path(args.dump_trace).write_text(m.trace.dump())
        else:
            rep = run_bundle(b, vec, trojans, golden=gold)
        reports.append(rep.to_json())
    _emit(reports[0] if len(reports) == 1 else reports)
    return EXIT_OK


def cmd_trojan_inject(args) -> int:
    b = load_bundle(args.bundle)
    trojans = _load_trojans(args.spec)
    results = []
    for vec in parse_vectors(args.inputs):
        gold = parse_vectors(args.golden)[0] if args.golden else execute(b.variants[0], vec).outputs
        rep, m = run_bundle(b, vec, trojans, golden=gold, record=True)
        act = activation_mask(b, m)
        o = classify_outcome(rep, gold, act)
        results.append({
            "report": rep.to_json(),
            "activation": o.mask_str(),
            "detected": o.detected,
            "tolerated": o.tolerated,
            "fired": {t.name: [list(h) for h in hits] for t, hits in zip(trojans, m.fired)},
        })
    _emit(results[0] if len(results) == 1 else results)
    return EXIT_OK


def cmd_tar(args) -> int:
    cfg = _settings(args)
    b = load_bundle(args.bundle, force_escalate=True)
    vec = parse_vectors(args.inputs)[0]
    ks = parse_ks(args.k) if args.k else cfg.ks
    sps = args.sp_max or cfg.sp_maxes
    sp_min = args.sp_min if args.sp_min is not None else cfg.sp_min
    cap = args.cap or cfg.cap
    entries = tar_for_bundle(b, vec, ks, sps, sp_min, cap, cfg.seed)
    rows = [e.row() for e in entries]
    cols = ("pair", "k", "sp_max", "T_n", "T_m", "TAR", "mode")
    if args.csv:
        path = write_csv(args.csv, rows, cols)
        m = _manifest(args, cfg)
        m.add_input(args.bundle)
        m.write(path.parent, [path])
    else:
        write = csv.DictWriter(sys.stdout, fieldnames=cols, lineterminator="\n")
        write.writeheader()
        write.writerows(rows)
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import build_report

    rep = build_report(args.results, args.out)
    for c in rep.checks:
        print(c.line())
    print(f"wrote {len(rep.files)} files")
    return EXIT_OK


def _corpus_entries(cfg: WorkspaceConfig, only: Sequence[str] | None):
    if cfg.corpus_dir is not None:
        if not Path(cfg.corpus_dir).is_dir():
            raise ConfigError(f"corpus directory {cfg.corpus_dir} does not exist")
        entries = corpus.load_dir(cfg.corpus_dir)
    else:
        entries = corpus.load_all()
    if only:
        entries = [e for e in entries if e.name in only]
    if not entries:
        raise ConfigError("no programs found")
    return entries


def cmd_pipeline(args) -> int:
    from .scenarios import run_suite

    cfg = _settings(args)
    if getattr(args, "out", None):
        cfg.out = args.out
    out = Path(cfg.out)
    only = args.programs.split(",") if args.programs else None
    entries = _corpus_entries(cfg, only)
    db = load_passdb(cfg.passdb)
    written = []
    overhead, runs = [], []
    for e in entries:
        fixtures = list(e.fixtures) or [default_tests(e.n_inputs, n_random=1, seed=cfg.seed)[0]]
        tests = default_tests(e.n_inputs, e.fixtures, seed=cfg.seed)
        pool = generate_pool(e.program, db, cfg.pool_seeds, cfg.seed, tests)
        bad = [c.name for c in pool.candidates if not c.verdict.ok]
        if bad:
            raise EquivalenceFailure(f"{e.name}: divergent variants {', '.join(bad)}")
        pdir = out / e.name
        pdir.mkdir(parents=True, exist_ok=True)
        progs = pool.programs()
        mfile = pdir / "matrix.csv"
        mfile.write_text(matrix_csv([p.name for p in progs], pairwise_matrix(progs)))
        sel = select_variants(pool, cfg.k)
        golden = [execute(e.program, f) for f in fixtures]
        outs = max(len(g.outputs) for g in golden)
        b = build_bundle(sel.chosen, VotePolicy(cfg.k), seed=cfg.seed, expected_outputs=outs, name=f"{e.name}_bundle")
        sfile = write_json(pdir / "selection.json", {
            "chosen": sel.names,
            "objective": str(sel.objective),
            "pool_size": len(pool.eligible),
            "generated": pool.generated,
        })
        written += [mfile, sfile] + save_bundle(b, pdir / "bundle.s")
        for n, (f, g) in enumerate(zip(fixtures, golden)):
            rep = run_bundle(b, f, golden=g.outputs)
            runs.append({
                "program": e.name,
                "fixture": n,
                "verdict": rep.verdict.value,
                "variants_executed": rep.variants_executed,
                "outputs_match_golden": rep.accepted == tuple(g.outputs),
            })
        overhead.append(overhead_report(e.program, b, fixtures[0]).row())
        print(f"{e.name}: {', '.join(sel.names)} (max VS {float(sel.objective):.4f})")
    written.append(write_csv(out / "overhead.csv", overhead))
    written.append(write_csv(out / "runs.csv", runs))

    if args.experiments:
        names = {e.name for e in entries}
        tar_entries = [e for e in entries if e.name in cfg.tar_programs]
        if tar_entries:
            sweep = tar_sweep(
                [(e.program, e.fixtures) for e in tar_entries], db, cfg.fixtures_per_program, cfg.pool_seeds,
                cfg.seed, cfg.ks, cfg.sp_maxes, cfg.sp_min, cfg.sweep_cap,
            )
            written.append(write_csv(out / "tar" / "tar_sweep.csv", sweep.rows()))
            print(f"TAR sweep: {len(sweep.fixtures)} fixtures, {len(sweep.complete)} complete")
        if cfg.scenario_program in names:
            e = next(x for x in entries if x.name == cfg.scenario_program)
            pool = generate_pool(e.program, db, cfg.pool_seeds, cfg.seed, default_tests(e.n_inputs, e.fixtures, seed=cfg.seed))
            sel = select_variants(pool, 3)
            suite = run_suite(sel.chosen, e.fixtures[0], cfg.seed)
            written.append(write_csv(out / "scenarios" / "scenarios.csv", suite.rows()))
            print(f"scenarios: {sum(r.matches for r in suite.results)}/{len(suite.results)} match")

    m = _manifest(args, cfg)
    if cfg.corpus_dir:
        m.add_input(cfg.corpus_dir)
    else:
        for e in entries:
            m.inputs[f"corpus/{e.name}.s"] = sha256_file(corpus.CORPUS_DIR / f"{e.name}.s")
    m.write(out, written)
    return EXIT_OK


# --- parser --------------------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="master seed (default 0)")
    p.add_argument("--config", default=d, help="workspace config JSON")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vforge", description=__doc__.splitlines()[0])
    _global_flags(p, False)
    p.add_argument("--out", default=None, help="output directory (harden: output bundle file)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        sp = sub.add_parser(name, **kw)
        _global_flags(sp, True)
        return sp

    asm = add("asm", help="assembly utilities")
    asm_sub = asm.add_subparsers(dest="asm_command", required=True)
    chk = asm_sub.add_parser("check", help="parse and validate assembly files")
    chk.add_argument("files", nargs="+")
    chk.set_defaults(func=cmd_asm_check)

    var = add("variants", help="variant generation")
    var_sub = var.add_subparsers(dest="variants_command", required=True)
    gen = var_sub.add_parser("gen", help="generate and verify a variant pool")
    gen.add_argument("file")
    gen.add_argument("--db", help="pass-sequence database JSON (default: bundled)")
    gen.add_argument("--seeds", type=int, help="seeds per pass sequence")
    gen.add_argument("--inputs", help="fixture input vectors")
    gen.add_argument("--out", default=argparse.SUPPRESS)
    _global_flags(gen, True)
    gen.set_defaults(func=cmd_variants_gen)

    vs = add("vs", help="variant similarity")
    vs_sub = vs.add_subparsers(dest="vs_command", required=True)
    score = vs_sub.add_parser("score", help="similarity of two programs")
    score.add_argument("--a", required=True)
    score.add_argument("--b", required=True)
    score.add_argument("--opcode-only", action="store_true")
    score.set_defaults(func=cmd_vs_score)
    mat = vs_sub.add_parser("matrix", help="normalized similarity matrix of a directory")
    mat.add_argument("dir")
    mat.add_argument("--opcode-only", action="store_true")
    mat.add_argument("--csv", help="write the matrix here instead of stdout")
    mat.set_defaults(func=cmd_vs_matrix)

    sel = add("select", help="pick the k most diverse programs of a directory")
    sel.add_argument("dir")
    sel.add_argument("--k", type=int, required=True)
    sel.add_argument("--base", help="include this base program in the candidates")
    sel.add_argument("--opcode-only", action="store_true")
    sel.set_defaults(func=cmd_select)

    hd = add("harden", help="integrate the k most diverse variants into one bundle")
    hd.add_argument("base")
    hd.add_argument("--variants", required=True, help="directory of candidate variants")
    hd.add_argument("--k", type=int)
    hd.add_argument("--inputs", help="fixture input vectors for the equivalence check")
    hd.add_argument("--out", default=argparse.SUPPRESS, help="bundle assembly file")
    hd.set_defaults(func=cmd_harden)

    run = add("run", help="run a bundle and print its RunReport")
    run.add_argument("bundle")
    run.add_argument("--inputs", required=True)
    run.add_argument("--trojans")
    run.add_argument("--golden")
    run.add_argument("--dump-trace", help="write the net trace of the (last) run here")
    run.set_defaults(func=cmd_run)

    tj = add("trojan", help="Trojan injection")
    tj_sub = tj.add_subparsers(dest="trojan_command", required=True)
    inj = tj_sub.add_parser("inject", help="run a bundle with Trojans and classify the outcome")
    inj.add_argument("--spec", required=True)
    inj.add_argument("--bundle", required=True)
    inj.add_argument("--inputs", required=True)
    inj.add_argument("--golden")
    inj.set_defaults(func=cmd_trojan_inject)

    tar = add("tar", help="Trigger Avoidance Rate over every variant pair of a bundle")
    tar.add_argument("--bundle", required=True)
    tar.add_argument("--inputs", required=True)
    tar.add_argument("--k", help="trigger sizes, e.g. 4..8 or 4,6")
    tar.add_argument("--sp-max", type=float, action="append")
    tar.add_argument("--sp-min", type=float)
    tar.add_argument("--cap", type=int)
    tar.add_argument("--csv")
    tar.set_defaults(func=cmd_tar)

    rp = add("report", help="aggregate result directories")
    rp.add_argument("results")
    rp.add_argument("--out", default=argparse.SUPPRESS)
    rp.set_defaults(func=cmd_report)

    pl = add("pipeline", help="pool, select, harden, run and measure overhead for the corpus")
    pl.add_argument("--programs", help="comma-separated subset of corpus programs")
    pl.add_argument("--experiments", action="store_true", help="also run the TAR sweep and Trojan scenarios")
    pl.add_argument("--out", default=argparse.SUPPRESS)
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except EquivalenceFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EQUIVALENCE
    except SimulationFault as e:
        print(f"error: simulation fault: {e}", file=sys.stderr)
        return EXIT_SIMULATION
    except (ConfigError, AsmError, MissingManifest, InsufficientCandidates, NonOddK, RegionOverflow) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
