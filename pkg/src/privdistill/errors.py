"""Exception hierarchy shared by every stage of the pipeline."""


class PrivDistillError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(PrivDistillError):
    """Invalid configuration value or infeasible setup request."""


class ShapeError(PrivDistillError):
    """Tensor shapes incompatible with the requested operation."""


class GraphError(PrivDistillError):
    """Unsupported primitive or misuse of the differentiation graph."""


class FormatError(PrivDistillError):
    """Malformed on-disk artifact (bad magic, version, or truncation)."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataError(PrivDistillError):
    """Dataset contents violate a precondition (missing labels, bad ids)."""


class TrainingError(PrivDistillError):
    """Training diverged or produced non-finite values."""


class StageError(PrivDistillError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


class ReportError(PrivDistillError):
    """Report generation could not find required artifacts."""
