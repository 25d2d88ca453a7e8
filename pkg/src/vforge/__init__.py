"""Trojan-resilient software variants for a toy 32-bit RISC machine: variant
generation, similarity-guided selection, integrated execution with majority
voting, and a net-level Trojan simulator."""

__version__ = "0.1.0"
