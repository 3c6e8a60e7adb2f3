"""Shared exception types.

Anything that is a plain misuse of an API (bad argument combinations, empty
required inputs) raises ValueError; lookups of unregistered ids raise KeyError.
The classes here cover failure modes that callers are expected to catch and
report: malformed input files, inconsistent graph data, mismatched shapes and
bad configuration.
"""

from __future__ import annotations


class EgcrError(Exception):
    """Base class for errors raised by this package."""


class ParseError(EgcrError):
    """A source file could not be parsed.

    Carries the one-based line number when the failure is tied to a line.
    """

    def __init__(self, message: str, *, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        prefix = ""
        if source is not None:
            prefix += f"{source}:"
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class IntegrityError(EgcrError):
    """Data references something that does not exist or violates an invariant."""


class DimensionError(EgcrError):
    """A vector or matrix has a shape incompatible with its context."""


class ConfigError(EgcrError):
    """A configuration value is missing, unknown or out of range."""


class TemplateError(EgcrError):
    """A prompt template is malformed or left a placeholder unresolved."""
