"""
Custom exception taxonomy for callaudit.

Every error raised on purpose by the package derives from `CallAuditError`.
Two branches matter to the command line: `ConfigurationError` is a usage error,
`DataError` is a problem with the inputs being analysed. Errors that point into a
file carry the position as attributes so callers can build annotations from them.
"""

from __future__ import annotations


class CallAuditError(Exception):
    """Base exception for all callaudit errors."""


class ConfigurationError(CallAuditError):
    """
    Raised when configuration is invalid or incomplete.

    This occurs for unknown configuration keys, values that cannot be parsed into
    the field's type, and command-line flag combinations that make no sense.
    """


class DataError(CallAuditError):
    """Raised when the data being processed (sources, graphs, datasets) is unusable."""


class SourceSyntaxError(DataError):
    """
    Raised when Solidity source text cannot be lexed or parsed.

    :param message: description of the problem
    :param line: 1-based line of the offending token
    :param column: 1-based column of the offending token
    :param file: optional file the source came from
    """

    def __init__(
        self, message: str, line: int, column: int, file: str | None = None
    ) -> None:
        self.line: int = line
        self.column: int = column
        self.file: str | None = file
        self.message: str = message
        where = f"{file}:" if file else ""
        super().__init__(f"{where}{line}:{column}: {message}")


class UnterminatedString(SourceSyntaxError):
    """Raised when a string literal is not closed before the end of the input."""


class UnterminatedComment(SourceSyntaxError):
    """Raised when a `/* ... */` comment is not closed before the end of the input."""


class ParseError(SourceSyntaxError):
    """
    Raised when the token stream does not match the supported Solidity subset.

    :param expected: hint naming what the parser was looking for
    """

    def __init__(
        self,
        message: str,
        line: int,
        column: int,
        file: str | None = None,
        expected: str | None = None,
    ) -> None:
        self.expected: str | None = expected
        if expected:
            message = f"{message} (expected {expected})"
        super().__init__(message, line, column, file)


class DotSyntaxError(DataError):
    """Raised when DOT text is not a well-formed digraph."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line: int | None = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class NoSourcesFound(DataError):
    """Raised when a source directory contains no `.sol` files."""


class EmptyCorpus(DataError):
    """Raised when a label vocabulary is requested for zero graphs."""


class EmptyDataset(DataError):
    """Raised when training or evaluation is asked to run on zero samples."""


class ManifestError(DataError):
    """
    Raised when a dataset manifest row is malformed or points at a missing file.

    :param row: 1-based row number in the manifest
    """

    def __init__(self, message: str, row: int | None = None) -> None:
        self.row: int | None = row
        prefix = f"manifest row {row}: " if row is not None else ""
        super().__init__(f"{prefix}{message}")


class IncompatibleCheckpoint(DataError):
    """Raised when a checkpoint cannot be loaded for the requested model or format version."""


class PairOutOfRange(DataError):
    """Raised when an edge-prediction node pair is a self pair or references a padded node."""


class TensorError(CallAuditError):
    """Base class for errors raised by tensor operations."""


class ShapeMismatch(TensorError):
    """
    Raised when operand shapes are incompatible.

    The message reports both shapes so the offending layer is easy to find.
    """

    def __init__(self, op: str, left: tuple[int, ...], right: tuple[int, ...]) -> None:
        self.op: str = op
        self.left: tuple[int, ...] = left
        self.right: tuple[int, ...] = right
        super().__init__(f"{op}: incompatible shapes {left} and {right}")


class NonFiniteInput(TensorError):
    """Raised in checked mode when an operation receives NaN or infinite values."""


class NotScalarLoss(TensorError):
    """Raised when `backward()` is called on a tensor that is not a single value."""


class CancellationRequested(CallAuditError):
    """
    Raised when a cancellation signal (SIGTERM, SIGINT) is received.

    Long-running commands catch it to keep the artifacts written so far.
    """


class UnknownAttributeWarning(UserWarning):
    """Emitted when DOT input uses an attribute the reader does not understand."""


class SingleClassDatasetWarning(UserWarning):
    """Emitted when a training set contains only one label; training still proceeds."""
