"""Exception types shared across the engine."""


class QAError(Exception):
    """Base class for engine errors."""


class NotFoundError(QAError):
    """A requested record does not exist."""


class ConfigError(QAError):
    """Invalid or inconsistent configuration."""


class TransportError(QAError):
    """A remote backend call failed.

    `stage` names the pipeline stage that was talking to the backend
    (encode / retrieve / rerank) so callers can report where it broke.
    """

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class DatasetError(QAError):
    """A dataset file violates the documented format.

    `line` is the 1-based line number of the offending record, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
