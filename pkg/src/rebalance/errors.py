"""Exception types raised across the package."""
from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of a function."""


class AbsorbingStateError(RuntimeError):
    """A state with total jump rate zero was reached."""


class NumericalError(FloatingPointError):
    """Non-finite value produced during simulation.

    Attributes:
        jump_index: index of the jump at which the failure happened, if known.
        state: offending ``(q, p)`` pair, if known.
    """

    def __init__(self, message, jump_index=None, state=None):
        if jump_index is not None:
            message = f"{message} (at jump {jump_index})"
        super().__init__(message)
        self.jump_index = jump_index
        self.state = state


class SingularReflectionError(ArithmeticError):
    """Reflection requested across a zero gradient."""


class FormatError(ValueError):
    """Malformed input file.

    Attributes:
        line: 1-based line number of the offending row, if known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
