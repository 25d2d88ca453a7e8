"""Brute-force bigram-minimum similarity computed from assembly text alone,
sharing no code with vforge.similarity."""

from __future__ import annotations

import re
from collections import Counter
from fractions import Fraction


def _tokens(text: str) -> tuple[list[str], list[str]]:
    ops, operands = [], []
    for line in text.splitlines():
        line = line.split(";")[0].strip()
        if not line or line.startswith(".") or line.endswith(":"):
            continue
        head, _, rest = line.partition(" ")
        ops.append(head.upper())
        for tok in filter(None, (t.strip() for t in rest.split(","))):
            if re.fullmatch(r"r\d+", tok):
                operands.append(tok)
            elif re.fullmatch(r"[+-]?(0x[0-9a-fA-F]+|\d+)", tok):
                operands.append("IMM")
            else:
                operands.append("LABEL")
    return ops, operands


def _pairs(seq: list[str]) -> Counter:
    c: Counter = Counter()
    for i in range(len(seq) - 1):
        c[(seq[i], seq[i + 1])] += 1
    return c


def oracle_vs(text_a: str, text_b: str, opcode_only: bool = False) -> tuple[int, Fraction]:
    oa, pa = _tokens(text_a)
    ob, pb = _tokens(text_b)
    tables_a = [_pairs(oa)] + ([] if opcode_only else [_pairs(pa)])
    tables_b = [_pairs(ob)] + ([] if opcode_only else [_pairs(pb)])
    raw = 0
    for ta, tb in zip(tables_a, tables_b):
        for key in set(ta) | set(tb):
            raw += min(ta[key], tb[key])
    total_a = sum(sum(t.values()) for t in tables_a)
    total_b = sum(sum(t.values()) for t in tables_b)
    if total_a + total_b == 0:
        return 0, Fraction(1)
    return raw, Fraction(raw) / Fraction(total_a + total_b, 2)
