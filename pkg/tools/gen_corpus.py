"""Regenerate the bundled corpus under src/vforge/corpus/.

Hand-written sources in tools/corpus_src/ are canonicalised (comments are
dropped) and the unrolled programs are generated here.  Run from the repo root:

    python tools/gen_corpus.py
"""

from __future__ import annotations

import json
from pathlib import Path

from vforge.isa import format_program, parse_program

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "tools" / "corpus_src"
DST = ROOT / "src" / "vforge" / "corpus"


def xorshift_unrolled(steps: int = 24, every: int = 8) -> str:
    lines = [
        ".func setup",
        "IN r0",
        "LI r1, 1",
        "OR r0, r0, r1",
        "LI r2, 13",
        "LI r3, 17",
        "LI r4, 5",
        ".endfunc",
        ".func mix",
    ]
    for s in range(steps):
        lines += [
            "SLL r5, r0, r2",
            "XOR r0, r0, r5",
            "SRL r5, r0, r3",
            "XOR r0, r0, r5",
            "SLL r5, r0, r4",
            "XOR r0, r0, r5",
        ]
        if (s + 1) % every == 0:
            lines.append("OUT r0")
    lines += ["HALT", ".endfunc"]
    return "\n".join(lines) + "\n"


def tea_unrolled(rounds: int = 32) -> str:
    lines = [
        ".func setup",
        "IN r0",
        "IN r1",
        "IN r2",
        "IN r3",
        "IN r4",
        "IN r5",
        "LI r6, 0",
        "LI r7, 0x9E3779B9",
        "LI r9, 4",
        "LI r10, 5",
        ".endfunc",
        ".func encrypt",
    ]
    for _ in range(rounds):
        lines += [
            "ADD r6, r6, r7",
            "SLL r11, r1, r9",
            "ADD r11, r11, r2",
            "ADD r12, r1, r6",
            "XOR r11, r11, r12",
            "SRL r12, r1, r10",
            "ADD r12, r12, r3",
            "XOR r11, r11, r12",
            "ADD r0, r0, r11",
            "SLL r11, r0, r9",
            "ADD r11, r11, r4",
            "ADD r12, r0, r6",
            "XOR r11, r11, r12",
            "SRL r12, r0, r10",
            "ADD r12, r12, r5",
            "XOR r11, r11, r12",
            "ADD r1, r1, r11",
        ]
    lines += [".endfunc", ".func emit", "OUT r0", "OUT r1", "HALT", ".endfunc"]
    return "\n".join(lines) + "\n"


def oaat(words: int = 16) -> str:
    """One-at-a-time style hash over ``words`` input words, fully unrolled."""
    lines = [".func init", "LI r0, 0", "LI r2, 10", "LI r3, 6", "LI r4, 3", "LI r5, 11", "LI r6, 15", ".endfunc", ".func mix"]
    for _ in range(words):
        lines += ["IN r1", "ADD r0, r0, r1", "SLL r7, r0, r2", "ADD r0, r0, r7", "SRL r7, r0, r3", "XOR r0, r0, r7"]
    lines += [
        ".endfunc", ".func final",
        "SLL r7, r0, r4", "ADD r0, r0, r7", "SRL r7, r0, r5", "XOR r0, r0, r7",
        "SLL r7, r0, r6", "ADD r0, r0, r7", "OUT r0", "HALT", ".endfunc",
    ]
    return "\n".join(lines) + "\n"


def xtea_unrolled(rounds: int = 16) -> str:
    """XTEA encryption with the key held in memory words 64..67."""
    lines = [".func setup", "IN r0", "IN r1", "LI r8, 64"]
    for w in range(4):
        lines += ["IN r2", f"SW r2, r8, {w}"]
    lines += ["LI r6, 0", "LI r7, 0x9E3779B9", "LI r9, 4", "LI r10, 5", "LI r11, 3", "LI r12, 11", ".endfunc", ".func encrypt"]
    for _ in range(rounds):
        lines += [
            "SLL r2, r1, r9", "SRL r3, r1, r10", "XOR r2, r2, r3", "ADD r2, r2, r1",
            "AND r3, r6, r11", "ADD r3, r3, r8", "LW r3, r3, 0", "ADD r3, r3, r6",
            "XOR r2, r2, r3", "ADD r0, r0, r2",
            "ADD r6, r6, r7",
            "SLL r2, r0, r9", "SRL r3, r0, r10", "XOR r2, r2, r3", "ADD r2, r2, r0",
            "SRL r3, r6, r12", "AND r3, r3, r11", "ADD r3, r3, r8", "LW r3, r3, 0", "ADD r3, r3, r6",
            "XOR r2, r2, r3", "ADD r1, r1, r2",
        ]
    lines += [".endfunc", ".func emit", "OUT r0", "OUT r1", "HALT", ".endfunc"]
    return "\n".join(lines) + "\n"


FIXTURES = {
    "checksum": [[1, 2, 3, 4], [0xFFFFFFFF, 1, 0x80000000, 0x7FFFFFFF]],
    "fib": [[10], [31], [0]],
    "gcd": [[47, 11], [120, 84], [255, 255]],
    "bitcount": [[0xF0F0F0F0, 0x1], [0xFFFFFFFF, 0]],
    "lfsr": [[0xACE1, 17], [0xDEADBEEF, 63]],
    "crc32": [[0x64636261, 0x68676665, 0x6C6B6A69, 0x706F6E6D], [0, 0, 0, 0]],
    "bsort": [[9, 3, 7, 1, 8, 2, 6, 4], [65535, 0, 12345, 1, 1, 2, 40000, 3]],
    "matmul": [[42], [0xCAFEBABE]],
    "tea": [[0x01234567, 0x89ABCDEF, 0x00112233, 0x44556677, 0x8899AABB, 0xCCDDEEFF], [0, 0, 0, 0, 0, 0]],
    "xorshift": [[2463534242], [7]],
    "oaat": [list(range(1, 17)), [0xDEADBEEF] * 16],
    "xtea16": [[0x01234567, 0x89ABCDEF, 0x00112233, 0x44556677, 0x8899AABB, 0xCCDDEEFF], [0, 0, 0, 0, 0, 0]],
    "tea_unrolled": [[0x01234567, 0x89ABCDEF, 0x00112233, 0x44556677, 0x8899AABB, 0xCCDDEEFF]],
}


def main() -> None:
    DST.mkdir(parents=True, exist_ok=True)
    sources = {p.stem: p.read_text() for p in sorted(SRC.glob("*.s"))}
    sources["xorshift"] = xorshift_unrolled()
    sources["tea_unrolled"] = tea_unrolled()
    sources["oaat"] = oaat()
    sources["xtea16"] = xtea_unrolled()
    meta = {}
    for name, text in sorted(sources.items()):
        prog = parse_program(text, name)
        (DST / f"{name}.s").write_text(format_program(prog))
        meta[name] = {"n_inputs": len(FIXTURES[name][0]), "fixtures": FIXTURES[name]}
    (DST / "fixtures.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
