"""Exception types shared across the package."""


class ArgrelError(Exception):
    """Base class for package errors."""


class CorpusFormatError(ArgrelError):
    """Malformed corpus file; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateDocumentError(ArgrelError):
    """Two documents share a doc_id within one split."""


class UndefinedInputError(ArgrelError):
    """An operation was asked for a value it cannot define (e.g. a ratio over zero items)."""


class ConfigurationError(ArgrelError):
    """Inconsistent or incomplete configuration for an operation."""


class BudgetError(ArgrelError):
    """Selection budget exceeds what the unlabeled pool can supply."""


class EmptyTrainingError(ArgrelError):
    """No training examples could be derived from the given data."""


class DegenerateTrainingError(ArgrelError):
    """Training data admits no decision boundary (e.g. a single class)."""


class CheckpointError(ArgrelError):
    """Base class for checkpoint container problems."""


class CheckpointVersionError(CheckpointError):
    """Container version is not supported by this code."""


class CheckpointIntegrityError(CheckpointError):
    """Container is corrupt or its content digest does not match."""


class IncompatibleCheckpointError(CheckpointError):
    """Checkpoint shapes/config do not match what the caller requires."""
