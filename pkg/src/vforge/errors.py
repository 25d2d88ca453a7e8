"""Exception hierarchy shared across vforge modules."""

from __future__ import annotations


class VForgeError(Exception):
    """Base class for all vforge errors."""


class AsmError(VForgeError):
    """Problem in assembly source or program structure."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownOpcode(AsmError):
    pass


class ArityMismatch(AsmError):
    pass


class OperandKindError(AsmError):
    pass


class ImmediateOutOfRange(AsmError):
    pass


class RegisterOutOfRange(AsmError):
    pass


class UndefinedLabel(AsmError):
    def __init__(self, name: str, line: int | None = None):
        self.name = name
        super().__init__(f"undefined label {name!r}", line)


class DuplicateLabel(AsmError):
    def __init__(self, name: str, line: int | None = None):
        self.name = name
        super().__init__(f"duplicate label {name!r}", line)


class FunctionError(AsmError):
    """Malformed .func/.endfunc structure."""


class MalformedProgram(AsmError):
    """Structural invariant violated (dangling label, fall-off end)."""


class EmptyProgram(VForgeError):
    pass


class AlphabetMismatch(VForgeError):
    pass


class InsufficientCandidates(VForgeError):
    pass


class RegionOverflow(VForgeError):
    pass


class NonOddK(VForgeError):
    pass


class SimulationFault(VForgeError):
    """A bundle or program run terminated abnormally."""

    def __init__(self, message: str, result=None):
        self.result = result
        super().__init__(message)


class NoCandidateNets(VForgeError):
    pass


class MissingManifest(VForgeError):
    pass
