"""Variant Similarity over opcode and operand bigram count tables.

Each program is summarised by two square count tables: how often opcode ``a``
is immediately followed by opcode ``b`` in the static listing, and the same for
the flattened operand stream (registers by name, every immediate as ``IMM``,
every label as ``LABEL``).  The similarity of two programs is the sum of the
cell-wise minima of both tables; lower means more diverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import AlphabetMismatch, EmptyProgram
from .isa import NUM_REGS, OPCODES, Imm, Label, Program, Reg

OPCODE_ALPHABET: tuple[str, ...] = tuple(op.value for op in OPCODES)
OPERAND_ALPHABET: tuple[str, ...] = tuple(f"r{i}" for i in range(NUM_REGS)) + ("IMM", "LABEL")


@dataclass(frozen=True)
class BigramTable:
    alphabet: tuple[str, ...]
    counts: np.ndarray  # |alphabet| x |alphabet|, int64

    @classmethod
    def from_tokens(cls, alphabet: Sequence[str], tokens: Sequence[str]) -> "BigramTable":
        alphabet = tuple(alphabet)
        index = {t: i for i, t in enumerate(alphabet)}
        counts = np.zeros((len(alphabet), len(alphabet)), dtype=np.int64)
        ids = [index[t] for t in tokens]
        if len(ids) > 1:
            np.add.at(counts, (ids[:-1], ids[1:]), 1)
        counts.setflags(write=False)
        return cls(alphabet, counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BigramTable)
            and self.alphabet == other.alphabet
            and np.array_equal(self.counts, other.counts)
        )

    def nonzero(self) -> dict[tuple[str, str], int]:
        rows, cols = np.nonzero(self.counts)
        return {(self.alphabet[r], self.alphabet[c]): int(self.counts[r, c]) for r, c in zip(rows, cols)}


@dataclass(frozen=True, eq=False)
class VariantSignature:
    opcode_table: BigramTable
    operand_table: BigramTable

    @property
    def opcode_pair_total(self) -> int:
        return self.opcode_table.total

    @property
    def operand_pair_total(self) -> int:
        return self.operand_table.total

    def total_pairs(self, opcode_only: bool = False) -> int:
        if opcode_only:
            return self.opcode_pair_total
        return self.opcode_pair_total + self.operand_pair_total


@dataclass(frozen=True)
class SimilarityScore:
    raw: int
    normalized: Fraction

    def __float__(self) -> float:
        return float(self.normalized)


def operand_token(o) -> str:
    if isinstance(o, Reg):
        return f"r{o.index}"
    if isinstance(o, Imm):
        return "IMM"
    if isinstance(o, Label):
        return "LABEL"
    raise TypeError(o)


def opcode_tokens(p: Program) -> list[str]:
    return [i.opcode.value for i in p.instructions]


def operand_tokens(p: Program) -> list[str]:
    return [operand_token(o) for i in p.instructions for o in i.operands]


def build_signature(p: Program) -> VariantSignature:
    if not p.instructions:
        raise EmptyProgram("cannot build a signature of an empty program")
    return VariantSignature(
        BigramTable.from_tokens(OPCODE_ALPHABET, opcode_tokens(p)),
        BigramTable.from_tokens(OPERAND_ALPHABET, operand_tokens(p)),
    )


def variant_similarity(a: VariantSignature, b: VariantSignature, opcode_only: bool = False) -> SimilarityScore:
    if a.opcode_table.alphabet != b.opcode_table.alphabet or (
        not opcode_only and a.operand_table.alphabet != b.operand_table.alphabet
    ):
        raise AlphabetMismatch("signatures were built over different alphabets")
    raw = int(np.minimum(a.opcode_table.counts, b.opcode_table.counts).sum())
    if not opcode_only:
        raw += int(np.minimum(a.operand_table.counts, b.operand_table.counts).sum())
    ta, tb = a.total_pairs(opcode_only), b.total_pairs(opcode_only)
    if ta + tb == 0:
        # two programs with no adjacent pairs at all: treat as identical
        return SimilarityScore(0, Fraction(1))
    return SimilarityScore(raw, Fraction(2 * raw, ta + tb))


def pairwise_matrix(
    pool: Sequence[Program], opcode_only: bool = False
) -> list[list[SimilarityScore]]:
    if len(pool) < 2:
        raise ValueError("pairwise_matrix needs at least two programs")
    sigs = [build_signature(p) for p in pool]
    n = len(sigs)
    m: list[list[SimilarityScore | None]] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            s = variant_similarity(sigs[i], sigs[j], opcode_only)
            m[i][j] = m[j][i] = s
    return m  # type: ignore[return-value]


def normalized_matrix(matrix: list[list[SimilarityScore]]) -> np.ndarray:
    return np.array([[float(s.normalized) for s in row] for row in matrix])


def matrix_csv(names: Sequence[str], matrix: list[list[SimilarityScore]]) -> str:
    lines = ["," + ",".join(names)]
    for name, row in zip(names, matrix):
        lines.append(name + "," + ",".join(f"{float(s.normalized):.6f}" for s in row))
    return "\n".join(lines) + "\n"
