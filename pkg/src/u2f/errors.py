"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass


class U2FError(Exception):
    """Base class for every domain error raised by this package."""


# --- story validation -------------------------------------------------------


@dataclass(frozen=True)
class ValidationIssue:
    """One structural problem found while validating a raw story record."""

    kind: str  # "missing_field" | "score_out_of_range" | "unknown_story_type"
    field: str
    value: object = None

    def __str__(self) -> str:
        if self.kind == "missing_field":
            return f"missing field: {self.field}"
        if self.kind == "score_out_of_range":
            return f"{self.field} out of range [1, 5]: {self.value!r}"
        return f"unknown story type: {self.value!r}"


class StoryValidationError(U2FError):
    """Raised with the full list of issues; the record is never repaired."""

    def __init__(self, issues: list[ValidationIssue]):
        self.issues = issues
        super().__init__("; ".join(str(i) for i in issues))


class MissingValidation(U2FError):
    """A UU candidate reached the filter without validation scores."""


# --- gateway ----------------------------------------------------------------


class GatewayError(U2FError):
    """Base class for provider-call failures."""


class Timeout(GatewayError):
    pass


class RateLimited(GatewayError):
    def __init__(self, retry_after_s: float, message: str = ""):
        self.retry_after_s = retry_after_s
        super().__init__(message or f"rate limited, retry after {retry_after_s}s")


class ProviderError(GatewayError):
    def __init__(self, status: int, body_excerpt: str):
        self.status = status
        self.body_excerpt = body_excerpt
        super().__init__(f"provider error {status}: {body_excerpt[:200]}")


class MissingScript(GatewayError):
    """The scripted mock has no entry for this request; it never fabricates."""


class SchemaViolation(U2FError):
    """Structured output could not be parsed after all repair attempts."""

    def __init__(self, problems: list[str], raw_text: str = "", attempts: int = 1):
        self.problems = problems
        self.raw_text = raw_text
        self.attempts = attempts
        super().__init__("; ".join(problems))


# --- agent stages -----------------------------------------------------------


class StageError(U2FError):
    """Wraps any error escaping an agent stage with the stage name attached."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


class EmptyStatement(U2FError):
    pass


class StatementTooLong(U2FError):
    pass


class MissingPotentialFix(U2FError):
    pass


class BaselineUnanchored(U2FError):
    """Baseline text shares no content word with the story's potential fix."""


class AbstractionTooConcrete(U2FError):
    def __init__(self, offending_terms: list[str]):
        self.offending_terms = offending_terms
        super().__init__(f"software-specific terms in abstraction: {offending_terms}")


class EmptyChain(U2FError):
    pass


class NoAcceptedUUs(U2FError):
    pass


class UnaddressedConflict(U2FError):
    def __init__(self, missing_names: list[str]):
        self.missing_names = missing_names
        super().__init__(f"refactored solution never names: {missing_names}")


class IncompletePlan(U2FError):
    def __init__(self, section: str):
        self.section = section
        super().__init__(f"implementation plan missing section: {section}")


# --- search -----------------------------------------------------------------


class SearchError(U2FError):
    pass


class ProviderUnavailable(SearchError):
    pass


class QuotaExceeded(SearchError):
    pass


# --- orchestrator -----------------------------------------------------------


class IllegalTransition(U2FError):
    def __init__(self, phase: str, signal: str):
        self.phase = phase
        self.signal = signal
        super().__init__(f"no transition from phase {phase} on signal {signal}")


class TerminalState(U2FError):
    pass


class TraceDivergence(U2FError):
    def __init__(self, seq: int, detail: str):
        self.seq = seq
        self.detail = detail
        super().__init__(f"replay diverged at seq {seq}: {detail}")


# --- evaluation -------------------------------------------------------------


class EmbedderFailure(U2FError):
    pass


class DegenerateInput(U2FError):
    pass


class UnequalRaterCounts(U2FError):
    pass


class MissingRatings(U2FError):
    def __init__(self, case_ids: list[str]):
        self.case_ids = case_ids
        super().__init__(f"no ratings for cases: {case_ids}")


# --- dataset ----------------------------------------------------------------


class ExtractionFailed(U2FError):
    def __init__(self, task_id: str, missing: str):
        self.task_id = task_id
        self.missing = missing
        super().__init__(f"task {task_id}: could not extract {missing}")


class NarrativeLengthViolation(U2FError):
    def __init__(self, word_count: int, low: int, high: int):
        self.word_count = word_count
        super().__init__(f"narrative is {word_count} words, wanted {low}-{high}")


class MismatchedTaskSets(U2FError):
    pass
