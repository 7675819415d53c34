"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for every failure raised by this package."""


class BackendUnavailable(PipelineError):
    """The chat or embedding backend could not serve a request."""


class StubKeyMissing(BackendUnavailable):
    """The stub backend has no fixture for the requested prompt."""


class MalformedResponse(PipelineError):
    """No parseable JSON object within the allowed attempts."""

    def __init__(self, message: str, attempts_used: int = 0, raw_text: str = ""):
        super().__init__(message)
        self.attempts_used = attempts_used
        self.raw_text = raw_text


class EmptyDocument(PipelineError):
    """A lecture document contained no non-empty page."""


class DuplicateLectureId(PipelineError):
    """Two input files normalize to the same lecture id."""


class EmptyConcept(PipelineError):
    """A concept surface string is empty after trimming."""


class TooFewPoints(PipelineError):
    """Not enough points for the density clusterer's reducer."""


class NoEvidence(PipelineError):
    """A candidate pair carries neither chunk nor cluster evidence."""


class DuplicatePair(PipelineError):
    """Two judgments cover the same unordered concept pair."""


class UnknownFormat(PipelineError):
    """Unsupported graph export format."""


class EmptyScoreList(PipelineError):
    """aggregate_scores called with no scores."""


class UnknownConcept(PipelineError):
    """An error concept is not a node of the graph."""


class EmptyQuestion(PipelineError):
    """A question has no text to tag."""


class ConfigError(PipelineError):
    """Bad or unknown configuration key or value."""


class PhaseFailure(PipelineError):
    """A pipeline phase failed; carries the phase name."""

    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"{phase}: {cause}")
        self.phase = phase
        self.cause = cause
