"""Exception hierarchy shared by every srsql module."""

from __future__ import annotations

from collections.abc import Iterable


class SrsqlError(Exception):
    """Base class for all domain errors raised by srsql."""


# -- schema --------------------------------------------------------------


class SchemaError(SrsqlError):
    pass


class MalformedSchemaFile(SchemaError):
    pass


class UnknownDbId(SchemaError):
    pass


class DisconnectedTerminals(SrsqlError):
    """No connected subgraph of the schema graph covers every terminal."""


# -- parsing / resolution ------------------------------------------------


class SQLSyntaxError(SrsqlError):
    """Parse failure carrying the character offset and the expected tokens."""

    def __init__(self, message: str, position: int, expected: Iterable[str] = ()):
        self.position = position
        self.expected = tuple(sorted(set(expected)))
        detail = f"{message} at position {position}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class ResolutionError(SrsqlError):
    """A table or column reference does not resolve against the schema."""


class UnknownTable(ResolutionError):
    pass


class UnknownColumn(ResolutionError):
    pass


class AmbiguousColumn(ResolutionError):
    pass


class UnknownFusedToken(ResolutionError):
    pass


class UnresolvedReference(ResolutionError):
    pass


class UnsupportedSelfJoin(SrsqlError):
    """The same table appears under several aliases; fused tokens cannot tell them apart."""


# -- reranking -----------------------------------------------------------


class InvalidScore(SrsqlError, ValueError):
    pass


class ScorerFailure(SrsqlError):
    pass


class MissingLabel(SrsqlError):
    pass


class MalformedBeamFile(SrsqlError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(SrsqlError, ValueError):
    pass
