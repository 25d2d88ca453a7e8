"""On-disk artifacts: CSV tables, replayable run manifests and hardened bundles."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MissingManifest
from .harness import HardenedBundle, VotePolicy, build_bundle
from .isa import format_program, parse_program

MANIFEST_NAME = "manifest.json"


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def csv_text(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(rows, columns))
    return path


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_json(path: str | Path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


# --- manifests -------------------------------------------------------------------------


@dataclass
class ExperimentManifest:
    """Enough to replay a CLI run: the command, the resolved configuration and
    digests of everything read and written.  No timestamps, so identical runs
    produce identical manifests."""

    command: list[str]
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)  # path -> sha256
    outputs: dict[str, str] = field(default_factory=dict)  # path relative to the manifest -> sha256
    tool_version: str = field(default_factory=tool_version)

    def add_input(self, path: str | Path) -> None:
        p = Path(path)
        if p.is_dir():
            for f in sorted(p.rglob("*")):
                if f.is_file():
                    self.inputs[str(f)] = sha256_file(f)
        else:
            self.inputs[str(p)] = sha256_file(p)

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "tool_version": self.tool_version,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
        }

    def write(self, out_dir: str | Path, outputs: Iterable[str | Path]) -> Path:
        out_dir = Path(out_dir)
        for o in outputs:
            o = Path(o)
            self.outputs[o.resolve().relative_to(out_dir.resolve()).as_posix()] = sha256_file(o)
        return write_json(out_dir / MANIFEST_NAME, self.to_json())


def find_manifests(results: str | Path) -> list[tuple[Path, dict]]:
    results = Path(results)
    found = sorted(results.rglob(MANIFEST_NAME)) if results.is_dir() else []
    if not found:
        raise MissingManifest(f"no {MANIFEST_NAME} under {results}")
    return [(p.parent, json.loads(p.read_text())) for p in found]


# --- bundles ----------------------------------------------------------------------------


def save_bundle(b: HardenedBundle, path: str | Path) -> list[Path]:
    """Write ``bundle.s``, its ``bundle.json`` manifest and the integrated variants
    (``bundle.variants/``) so the bundle can be rebuilt and traced later."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vdir = path.with_suffix(".variants")
    vdir.mkdir(exist_ok=True)
    written = []
    files = []
    for i, v in enumerate(b.variants):
        f = vdir / f"{i}_{v.name}.s"
        f.write_text(format_program(v))
        files.append(f)
        written.append(f)
    text = format_program(b.program)
    path.write_text(text)
    written.append(path)
    meta = b.manifest()
    meta["program"] = b.program.name
    meta["program_sha256"] = sha256_text(text)
    meta["variant_files"] = [{"path": f.relative_to(path.parent).as_posix(), "sha256": sha256_file(f)} for f in files]
    written.append(write_json(path.with_suffix(".json"), meta))
    return written


def load_bundle(path: str | Path, force_escalate: bool | None = None) -> HardenedBundle:
    """Rebuild a saved bundle from its manifest and variants, checking that the
    rebuilt program matches the saved assembly.  ``force_escalate=True`` returns
    the all-variant twin used for tracing."""
    path = Path(path)
    mpath = path.with_suffix(".json")
    if not mpath.exists():
        raise MissingManifest(f"bundle manifest {mpath} not found")
    meta = json.loads(mpath.read_text())
    variants = []
    for entry in meta["variant_files"]:
        f = path.parent / entry["path"]
        text = f.read_text()
        if sha256_text(text) != entry["sha256"]:
            raise ValueError(f"variant file {f} does not match its recorded digest")
        variants.append(parse_program(text, Path(entry["path"]).stem.split("_", 1)[1]))
    kwargs = dict(seed=meta["seed"], region_size=meta["region_size"], name=meta["program"])
    b = build_bundle(variants, VotePolicy(meta["k"]), force_escalate=meta["force_escalate"], **kwargs)
    saved = path.read_text()
    if format_program(b.program) != saved:
        raise ValueError(f"{path} does not match the bundle rebuilt from {mpath}")
    if force_escalate is None or force_escalate == b.force_escalate:
        return b
    return build_bundle(variants, VotePolicy(meta["k"]), force_escalate=force_escalate, **kwargs)
