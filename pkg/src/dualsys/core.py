"""Domain types shared by every module, plus the context-accumulation rules.

All types are immutable values: building a trajectory means producing new
instances (``append_turn`` returns a fresh ``Trajectory``), which makes them
safe to share across concurrent rollouts.
"""

from __future__ import annotations

import hashlib
import random
import uuid
from dataclasses import dataclass, replace
from enum import Enum
from typing import Union

from .errors import InvalidInput, InvalidTurn, TurnLimit
from .tokens import TokenCounter, Tokenizer, WhitespaceTokenizer, whitespace_count


@dataclass(frozen=True)
class Message:
    """One chat message exchanged with an inference backend."""

    role: str  # "system" | "user" | "assistant" | "tool"
    content: str


@dataclass(frozen=True)
class RunConfig:
    """Run-level knobs: RL-phase hyperparameters plus artifact settings.

    The defaults are the production values; tests shrink the budgets.
    Learning rate, batch size and the entropy coefficient are recorded for
    downstream trainers but never used by this package.
    """

    group_size: int = 16
    max_turns: int = 10
    temperature: float = 1.0
    clip_epsilon: float = 0.2
    kl_coefficient: float = 0.0
    entropy_coefficient: float = 0.0
    learning_rate: float = 1e-6
    batch_size: int = 32
    sys1_max_prompt_tokens: int = 23552
    sys1_max_response_tokens: int = 8192
    sys2_max_prompt_tokens: int = 3072
    sys2_max_response_tokens: int = 28672
    rng_seed: int = 0
    pages_per_search_query: int = 10
    papers_per_scholar_query: int = 5
    sandbox_timeout_seconds: float = 30.0
    # artifact-level settings
    max_concurrency: int = 8
    judge_max_response_tokens: int = 2048
    chunk_separator: str = "\n\n=== distilled part {index} ===\n\n"
    inference_url: str | None = None
    inference_model: str | None = None
    judge_url: str | None = None
    judge_model: str | None = None
    sandbox_url: str | None = None
    search_url: str | None = None

    def __post_init__(self) -> None:
        counts = {
            "group_size": self.group_size,
            "max_turns": self.max_turns,
            "batch_size": self.batch_size,
            "sys1_max_prompt_tokens": self.sys1_max_prompt_tokens,
            "sys1_max_response_tokens": self.sys1_max_response_tokens,
            "sys2_max_prompt_tokens": self.sys2_max_prompt_tokens,
            "sys2_max_response_tokens": self.sys2_max_response_tokens,
            "pages_per_search_query": self.pages_per_search_query,
            "papers_per_scholar_query": self.papers_per_scholar_query,
            "max_concurrency": self.max_concurrency,
            "judge_max_response_tokens": self.judge_max_response_tokens,
        }
        for name, value in counts.items():
            if not isinstance(value, int) or value < 1:
                raise InvalidInput(f"{name} must be an integer >= 1, got {value!r}")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise InvalidInput(f"clip_epsilon must lie in (0, 1), got {self.clip_epsilon!r}")
        if self.kl_coefficient < 0.0:
            raise InvalidInput(f"kl_coefficient must be >= 0, got {self.kl_coefficient!r}")
        if self.temperature < 0.0:
            raise InvalidInput(f"temperature must be >= 0, got {self.temperature!r}")
        if self.sandbox_timeout_seconds <= 0.0:
            raise InvalidInput("sandbox_timeout_seconds must be positive")
        if not -(2**63) <= self.rng_seed < 2**64:
            raise InvalidInput("rng_seed must fit in 64 bits")


class ToolKind(str, Enum):
    SEARCH = "search"
    SCHOLAR = "scholar"
    PYTHON = "python"


@dataclass(frozen=True)
class ToolRequest:
    """One tool invocation: what to run and why the model wants it."""

    kind: ToolKind
    purpose: str
    queries: tuple[str, ...] = ()
    code: str | None = None

    def __post_init__(self) -> None:
        if not self.purpose or not self.purpose.strip():
            raise InvalidInput("tool request purpose must be non-empty")
        if self.kind is ToolKind.PYTHON:
            if self.queries:
                raise InvalidInput("python requests carry code, not queries")
            if self.code is None or self.code == "":
                raise InvalidInput("python requests must carry code")
        else:
            if self.code is not None:
                raise InvalidInput(f"{self.kind.value} requests carry queries, not code")
            if not self.queries or any(not q for q in self.queries):
                raise InvalidInput(f"{self.kind.value} requests need at least one non-empty query")


@dataclass(frozen=True)
class ToolOutput:
    """One raw retrieved document, paper, or execution result."""

    source: str  # URL, paper identifier, or "sandbox"
    title: str
    content: str
    origin: ToolKind
    truncated: bool = False


@dataclass(frozen=True)
class Turn:
    """One round of the interaction loop.

    ``completion`` keeps the verbatim generated text and ``logprobs`` the
    per-token log-probabilities recorded at rollout time; both feed training
    sample construction. ``error`` holds a synthetic observation injected when
    the step could not be parsed (it plays the distilled-text role in the
    context without pretending a valid request existed).
    """

    reasoning: str = ""
    request: ToolRequest | None = None
    distilled: str | None = None
    raw_output_count: int = 0
    bin_count: int = 0
    error: str | None = None
    completion: str | None = None
    logprobs: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if (self.distilled is None) != (self.request is None):
            raise InvalidTurn("distilled text is present iff a tool request is present")
        if self.error is not None and self.request is not None:
            raise InvalidTurn("error observations only apply to turns without a parsed request")
        if self.request is not None and self.request.kind is ToolKind.PYTHON and self.bin_count != 0:
            raise InvalidTurn("python turns bypass distillation and must have bin_count 0")
        if self.raw_output_count < 0 or self.bin_count < 0:
            raise InvalidTurn("output and bin counts must be non-negative")


class TrajectoryStatus(str, Enum):
    PENDING = "pending"
    ANSWERED = "answered"
    MAX_TURNS_EXCEEDED = "max_turns_exceeded"
    ABORTED = "aborted"


@dataclass(frozen=True)
class Trajectory:
    """One question's full multi-turn record."""

    question: str
    trajectory_id: str
    max_turns: int = 10
    turns: tuple[Turn, ...] = ()
    answer: str | None = None
    status: TrajectoryStatus = TrajectoryStatus.PENDING
    reward: float | None = None
    judged: bool | None = None
    abort_reason: str | None = None

    def __post_init__(self) -> None:
        if len(self.turns) > self.max_turns:
            raise InvalidInput("turn count exceeds the trajectory's turn budget")
        if (self.status is TrajectoryStatus.ANSWERED) != (self.answer is not None):
            raise InvalidInput("status is ANSWERED iff an answer is present")
        if self.reward is not None and self.reward not in (0.0, 1.0):
            raise InvalidInput(f"rewards are binary, got {self.reward!r}")


@dataclass(frozen=True)
class Sys1Sample:
    """One distillation training record: packed input and generated output."""

    trajectory_id: str
    turn_index: int
    bin_index: int
    packed_input: str
    output: str
    logprobs: tuple[float, ...] = ()
    ref_logprobs: tuple[float, ...] | None = None
    reward: float | None = None
    advantage: float | None = None


@dataclass(frozen=True)
class Sys2Sample:
    """One reasoning training record: the tokenized full context plus mask.

    The mask is true exactly on tokens the reasoning role generated; distilled
    spans, prompts, and tool echoes are false. ``logprobs`` align with the
    true positions in order.
    """

    trajectory_id: str
    token_ids: tuple[int, ...]
    loss_mask: tuple[bool, ...]
    logprobs: tuple[float, ...]
    ref_logprobs: tuple[float, ...] | None = None
    reward: float = 0.0
    advantage: float = 0.0

    def __post_init__(self) -> None:
        if len(self.token_ids) != len(self.loss_mask):
            raise InvalidInput("token ids and loss mask must have equal length")


# The context is a flat ordered list of elements: the question, then for each
# turn its reasoning, request, purpose and distilled text (in that order).
ContextElement = Union[str, ToolRequest]


def new_trajectory(
    question: str,
    *,
    max_turns: int = 10,
    trajectory_id: str | None = None,
    rng: random.Random | None = None,
) -> Trajectory:
    """Start a trajectory whose context is just the question.

    The question is stored verbatim (no normalization). Ids are 128-bit
    random values; pass ``rng`` to mint them from a seeded stream so that
    whole runs replay byte-identically.
    """
    if not question or not question.strip():
        raise InvalidInput("question must be non-empty")
    if max_turns < 1:
        raise InvalidInput("max_turns must be >= 1")
    if trajectory_id is None:
        bits = rng.getrandbits(128) if rng is not None else uuid.uuid4().int
        trajectory_id = f"{bits:032x}"
    return Trajectory(question=question, trajectory_id=trajectory_id, max_turns=max_turns)


def append_turn(trajectory: Trajectory, turn: Turn) -> Trajectory:
    """Return a new trajectory with ``turn`` appended at the end."""
    if len(trajectory.turns) >= trajectory.max_turns:
        raise TurnLimit(
            f"trajectory already holds {len(trajectory.turns)} turns "
            f"(limit {trajectory.max_turns})"
        )
    return replace(trajectory, turns=trajectory.turns + (turn,))


def context_elements(trajectory: Trajectory) -> list[ContextElement]:
    """Flatten the accumulated context in concatenation order.

    Yields the question, then per turn: reasoning, and for tool turns the
    request, its purpose, and the distilled text. Error observations appear
    where the distilled text would have.
    """
    elements: list[ContextElement] = [trajectory.question]
    for turn in trajectory.turns:
        elements.append(turn.reasoning)
        if turn.request is not None:
            elements.append(turn.request)
            elements.append(turn.request.purpose)
            elements.append(turn.distilled)  # type: ignore[arg-type]
        elif turn.error is not None:
            elements.append(turn.error)
    return elements


def derive_seed(base: int, *parts: str) -> int:
    """Deterministically derive a child seed from a base seed and labels."""
    material = f"{base}|" + "|".join(parts)
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1  # keep it non-negative


__all__ = [
    "ContextElement",
    "Message",
    "RunConfig",
    "Sys1Sample",
    "Sys2Sample",
    "TokenCounter",
    "Tokenizer",
    "ToolKind",
    "ToolOutput",
    "ToolRequest",
    "Trajectory",
    "TrajectoryStatus",
    "Turn",
    "WhitespaceTokenizer",
    "append_turn",
    "context_elements",
    "derive_seed",
    "new_trajectory",
    "whitespace_count",
]
