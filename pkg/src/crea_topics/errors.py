"""Exception hierarchy shared by every stage of the pipeline."""


class CreaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CreaError, ValueError):
    pass


class DomainError(CreaError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ParseError(CreaError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownReferenceError(CreaError, KeyError):
    """A document, object, attribute or topic id is not known."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ResourceLimitError(CreaError, RuntimeError):
    pass


class ServiceError(CreaError, RuntimeError):
    """Remote service failure that survived all retries."""

    def __init__(self, message: str, doc_id: str | None = None):
        self.doc_id = doc_id
        if doc_id is not None:
            message = f"{message} (doc {doc_id})"
        super().__init__(message)


class TopicValidationError(CreaError, ValueError):
    def __init__(self, message: str, topic_index: int | None = None):
        self.topic_index = topic_index
        super().__init__(message)


class PipelineError(CreaError, RuntimeError):
    """LLM pipeline failure carrying the stage name and the partial transcript."""

    def __init__(self, stage: str, cause: Exception, transcript=None):
        self.stage = stage
        self.cause = cause
        self.transcript = list(transcript or [])
        super().__init__(f"{stage} stage failed: {cause}")
