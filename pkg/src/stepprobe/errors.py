"""Exception types shared across the toolkit."""


class StepProbeError(Exception):
    """Base class for all toolkit errors."""


class QuestionUnreachable(StepProbeError):
    """No premise sequence can resolve the question subject."""


class AmbiguousMinimal(StepProbeError):
    """More than one shortest solution exists for a problem."""


class LimitExceeded(StepProbeError):
    """A search exceeded its configured node or state budget."""


class PoolExhausted(StepProbeError):
    """Not enough unused names (or name/suffix combinations) remain."""


class InvariantViolation(StepProbeError):
    """A generated problem failed one of its self-checks."""


class NoTemplateSentence(StepProbeError):
    """A natural instance has no sentence usable as a distractor template."""


class BadStep(StepProbeError):
    """A step index is outside the valid range for a problem."""


class AmbiguousSubject(StepProbeError):
    """A stated subject matches more than one premise subject."""


class Stuck(StepProbeError):
    """An agent has no admissible premise left before answering."""


class StepBudgetExceeded(StepProbeError):
    """An agent run did not finish within its step budget."""


class ProviderError(StepProbeError):
    """A completion provider returned a non-retryable or final error."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ProviderTimeout(ProviderError):
    """A completion request timed out after all retries."""


class RateLimited(ProviderError):
    """A completion request kept hitting rate limits after all retries."""


class MissingFixture(StepProbeError):
    """Replay mode was asked for a response that is not in the cache."""
