"""Exception hierarchy shared across the package."""


class RticaError(Exception):
    """Base class for all errors raised by this package."""


class DslSyntaxError(RticaError):
    """Malformed DSL text. Carries the line number and what was expected."""

    def __init__(self, message: str, line: int, expected: str | None = None):
        self.line = line
        self.expected = expected
        detail = f"line {line}: {message}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class SemanticError(RticaError):
    """A structurally well-formed problem that violates a type invariant.

    ``code`` identifies the violated invariant so callers (and tests) can
    distinguish variants without string matching.
    """

    UNDECLARED_VARIABLE = "undeclared_variable"
    DUPLICATE_VARIABLE = "duplicate_variable"
    DUPLICATE_RELATION = "duplicate_relation"
    DUPLICATE_KNOWN = "duplicate_known"
    MISSING_GOAL = "missing_goal"
    GOAL_UNDECLARED = "goal_undeclared"
    ARITY_MISMATCH = "arity_mismatch"
    ZERO_COEFFICIENT = "zero_coefficient"
    UNKNOWN_SUBJECT = "unknown_subject"
    BAD_LABEL = "bad_label"

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


class NoGoal(RticaError):
    """Problem has no goal declaration."""


class DepthLimitExceeded(RticaError):
    """Prerequisite expansion went past the configured depth limit."""


class InvalidWeights(RticaError):
    """Confidence weights are negative or do not sum to one."""


class TooLarge(RticaError):
    """Problem exceeds the exhaustive oracle's variable cap."""


class DegenerateCorpus(RticaError):
    """Threshold tuning needs both complete and incomplete problems."""


class InvalidCorpusSpec(RticaError):
    """Corpus generation request violates a spec invariant."""


class BadConfig(RticaError):
    """Invalid LLM or CLI configuration."""


class UnboundPlaceholder(RticaError):
    """Prompt rendering left a declared placeholder unbound."""


class LlmError(RticaError):
    """Base class for chat-endpoint failures."""

    retriable = False


class TransportError(LlmError):
    """Network-level failure or HTTP 5xx from the endpoint."""

    retriable = True


class RateLimited(LlmError):
    """HTTP 429 from the endpoint."""

    retriable = True


class MalformedResponse(LlmError):
    """Endpoint replied with something that is not a chat completion."""

    retriable = False
