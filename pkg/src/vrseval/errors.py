"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: input/parse problems exit 1,
constraint violations exit 2, anything unexpected exits 3.
"""

from __future__ import annotations


class VrsEvalError(Exception):
    """Base class for all toolkit errors."""


class InputError(VrsEvalError):
    """A file, record, or argument could not be accepted."""


class ParseError(InputError):
    """Malformed input; carries the file path and line for the offending record."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        locus = ""
        if path is not None:
            locus = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + locus)


class SchemaError(InputError):
    """A record parsed but violates the interchange schema or catalog sizes."""


class VocabularyError(InputError):
    """A category name or id is not present in the catalog."""


class UnknownImageError(InputError):
    """A prediction references an image id absent from the dataset."""


class ConstraintError(VrsEvalError):
    """A requested operation would violate a structural constraint."""
