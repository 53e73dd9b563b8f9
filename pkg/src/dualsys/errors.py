"""Typed errors shared across the package.

Every failure mode callers are expected to handle has its own class so that
tests and the rollout engine can branch on type rather than message text.
"""

from __future__ import annotations


class DualsysError(Exception):
    """Base class for all package errors."""


# --- trajectory construction -------------------------------------------------

class InvalidInput(DualsysError):
    """A value violates a documented precondition."""


class TurnLimit(DualsysError):
    """Appending a turn would exceed the trajectory's turn budget."""


class InvalidTurn(DualsysError):
    """A turn violates its structural invariants."""


# --- output grammar ----------------------------------------------------------

class MalformedTags(DualsysError):
    """Tag blocks nest, overlap, or are left unclosed."""


class MalformedToolCall(DualsysError):
    """A tool_call block exists but its payload cannot be turned into a request."""

    def __init__(self, message: str, reasoning: str | None = None):
        super().__init__(message)
        self.reasoning = reasoning


class AmbiguousStep(DualsysError):
    """A step contains both a tool call and an answer.

    Carries the parsed pieces so callers can resolve the conflict (the rollout
    engine honours the answer).
    """

    def __init__(self, message: str, reasoning: str = "", answer: str | None = None):
        super().__init__(message)
        self.reasoning = reasoning
        self.answer = answer


class InconsistentSpec(DualsysError):
    """A prior turn references a tool that is absent from the supplied specs."""


# --- bin packing -------------------------------------------------------------

class InvalidCapacity(DualsysError):
    """Bin capacity must be a positive integer."""


class NotOversize(DualsysError):
    """truncate() was called on an output that already fits."""


# --- tool execution ----------------------------------------------------------

class ToolError(DualsysError):
    """Base class for tool-side failures."""


class ToolUnavailable(ToolError):
    """A tool backend kept failing after retries."""


class SandboxTimeout(ToolError):
    """Code execution exceeded the configured wall-clock budget."""


class FetchError(ToolError):
    """A single page fetch failed; the page is skipped, not the turn."""


class ReplayMiss(ToolError):
    """Replay mode was asked for a request that is not in the store."""


# --- rollout -----------------------------------------------------------------

class BackendError(DualsysError):
    """An inference backend kept failing after retries."""


class DistillFailure(DualsysError):
    """Every bin of a distillation request failed to generate."""


# --- judging -----------------------------------------------------------------

class UnparseableJudgment(DualsysError):
    """The judge reply does not contain a usable verdict field."""


class OrphanSample(DualsysError):
    """A sample references a trajectory id that is not in the scored group."""


# --- advantage / loss math ---------------------------------------------------

class EmptyGroup(DualsysError):
    """Group statistics were requested for an empty reward list."""


class PrematureBalancing(DualsysError):
    """Balancing was attempted before every sample had an advantage."""


class EmptySys1(DualsysError):
    """A group produced no distillation samples at all."""


class MaskMismatch(DualsysError):
    """Token/mask/log-probability bookkeeping lengths disagree."""


class NoTrainableTokens(DualsysError):
    """A loss was requested for a sample whose mask excludes every token."""


class BatchInvariantViolation(DualsysError):
    """A training batch fails its count or completeness checks."""


# --- persistence -------------------------------------------------------------

class DecodeError(DualsysError):
    """A stored record could not be decoded."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset
