"""
Error types shared by every permkit service
"""
from __future__ import annotations

from typing import Optional


class PermkitError(Exception):
    """Base class; exit_code is what the CLI returns for this error."""
    exit_code = 2

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class DimensionError(PermkitError):
    """Vector or permutation lengths disagree"""


class DomainError(PermkitError):
    """An argument lies outside the domain of an operation"""


class DegenerateStatisticError(PermkitError):
    """A statistic cannot be evaluated (zero variance, NaN output)"""


class ParseError(PermkitError):
    """Malformed input file; carries the file name and 1-based line number"""

    def __init__(self, message: str, source: Optional[str] = None, line: Optional[int] = None):
        self.source = source
        self.line = line
        location = ''
        if source is not None:
            location = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(f"{location}{message}")


class CapacityError(PermkitError):
    """An enumeration would exceed its configured cap"""
    exit_code = 3
