"""Error categories raised by intentspace.

Each category carries the exit code the command-line tools return for it.
"""

from typing import Optional


class IntentSpaceError(Exception):
    """Base class of all intentspace errors."""

    exit_code = 1


class ConfigError(IntentSpaceError):
    """A configuration value or request is invalid."""

    exit_code = 2


class PathError(IntentSpaceError):
    """A referenced file or directory is missing or unreadable."""

    exit_code = 3


class ParseError(IntentSpaceError):
    """An input line could not be parsed."""

    exit_code = 4

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line


class FormatError(IntentSpaceError):
    """An input file or directory does not have the expected layout."""

    exit_code = 5


class ShapeError(IntentSpaceError):
    """Array dimensions do not agree."""

    exit_code = 6


class NumericError(IntentSpaceError):
    """A computation produced a non-finite value."""

    exit_code = 7


class EvalError(IntentSpaceError):
    """An evaluation cannot be performed on the given data."""

    exit_code = 8


class SplitError(IntentSpaceError):
    """A dataset cannot be split as requested."""

    exit_code = 9


class RangeError(IntentSpaceError):
    """A count or index is out of range."""

    exit_code = 10


class EmptyInputError(IntentSpaceError):
    """An operation received an empty input."""

    exit_code = 11


class UnsupportedFormError(IntentSpaceError):
    """The model's basis form does not support the operation."""

    exit_code = 12


class DomainError(IntentSpaceError):
    """A value lies outside the domain of a function."""

    exit_code = 13
