class ResourceLimitError(RuntimeError):
    """An exhaustive computation would exceed its size or cost guard."""


class ThresholdError(RuntimeError):
    """A pipeline precondition (bias threshold, feasibility) is not met.

    ``stage`` names the pipeline stage that gave up; ``metrics`` carries the
    measured quantities behind the decision."""

    def __init__(self, message: str, stage: str = "", metrics: dict | None = None):
        super().__init__(message)
        self.stage = stage
        self.metrics = metrics or {}


class VerificationError(AssertionError):
    """A produced certificate failed its own re-verification."""
