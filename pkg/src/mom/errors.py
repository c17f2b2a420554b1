"""Exception hierarchy shared across the pipeline."""


class MomError(Exception):
    """Base class for all pipeline errors."""


class SchemaError(MomError):
    """A dataset line violates the JSONL record schema."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DuplicateIdError(MomError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"duplicate record id: {record_id!r}")


class ParseError(MomError):
    """Serialized table text could not be parsed back into a Table."""


class FormatError(MomError):
    """Model output does not carry the expected tagged/fenced structure.

    ``kind`` is one of: missing_tag, empty_body, unclosed_tag, missing_fence.
    """

    MISSING_TAG = "missing_tag"
    EMPTY_BODY = "empty_body"
    UNCLOSED_TAG = "unclosed_tag"
    MISSING_FENCE = "missing_fence"

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {detail}" if detail else kind)


class ConfigError(MomError):
    pass


class UnmatchedRequestError(MomError):
    """No mock trace entry matches the incoming request."""

    def __init__(self, prompt_prefix: str):
        self.prompt_prefix = prompt_prefix
        super().__init__(f"no trace entry matches request: {prompt_prefix!r}")


class TransportError(MomError):
    """Transient transport failure that persisted past the retry budget."""


class AuthError(MomError):
    pass


class BackendError(MomError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"backend error {status}: {body[:200]}")


class SpawnError(MomError):
    """The sandbox harness binary could not be launched."""


class GroupTooSmallError(MomError):
    pass


class LengthMismatchError(MomError):
    pass


class NonFiniteError(MomError):
    pass


class InvariantViolationError(MomError):
    """Stored values disagree with their recomputation."""
