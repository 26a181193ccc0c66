"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class RagError(Exception):
    """Base class for every error raised by this package."""


class InputError(RagError):
    """Bad user input: files, records, configuration values."""


class DuplicateId(InputError):
    pass


class EmptyDocument(InputError):
    pass


class InvalidChunkConfig(InputError):
    pass


class EmptyCorpus(InputError):
    pass


class DimensionMismatch(RagError):
    pass


class ZeroVector(RagError):
    pass


class EmptyIndex(RagError):
    pass


class EmptyCandidates(RagError):
    pass


class MalformedTable(InputError):
    pass


class NoRetrievedContent(RagError):
    pass


class ConfigError(InputError):
    pass


class FormatError(InputError):
    """A persisted file is missing its header or has an unknown layout."""


class ParseError(InputError):
    def __init__(self, path: str, line: int, reason: str) -> None:
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


class MissingField(InputError):
    def __init__(self, path: str, line: int, field: str) -> None:
        super().__init__(f"{path}:{line}: missing field {field!r}")
        self.path = path
        self.line = line
        self.field = field


class RemoteServiceError(RagError):
    """Transport failure, non-200 status, or malformed body from a remote service."""
