"""Trajectory scoring with an LLM judge and reward broadcast.

Rewards are strictly binary. Trajectories that never produced an answer get 0
without any judge call; judge infrastructure failures also score 0 but are
flagged so downstream consumers can exclude them.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from .core import Message, RunConfig, Sys1Sample, Trajectory, TrajectoryStatus
from .errors import BackendError, InvalidInput, OrphanSample, UnparseableJudgment
from .inference import InferenceBackend
from .templates import JUDGE_PROMPT

logger = logging.getLogger(__name__)

_CORRECT_RE = re.compile(r"\bcorrect\s*:[\s*_\"']*(yes|no)\b", re.IGNORECASE)
_CONFIDENCE_RE = re.compile(r"\bconfidence\s*:[\s*_\"']*(\d+(?:\.\d+)?)\s*%?", re.IGNORECASE)

JUDGE_ATTEMPTS = 3


@dataclass(frozen=True)
class Judgment:
    """Parsed judge reply."""

    correct: bool
    confidence: float = 100.0


@dataclass(frozen=True)
class ScoreResult:
    """Outcome of scoring one trajectory.

    ``judged`` is False only when the judge itself failed; the reward is then
    a defaulted 0 rather than a verdict.
    """

    reward: float
    judged: bool
    judgment: Judgment | None = None


def render_judge_prompt(question: str, response: str, gold_answer: str) -> list[Message]:
    """Fill the grading template; the bracketed section headers are literal."""
    if not question or not response or not gold_answer:
        raise InvalidInput("question, response, and gold answer must all be non-empty")
    content = JUDGE_PROMPT.format(question=question, response=response, correct_answer=gold_answer)
    return [Message("user", content)]


def parse_judgment(judge_text: str) -> Judgment:
    """Extract the verdict and confidence fields from a judge reply.

    Repeated consistent ``correct:`` fields are tolerated; conflicting ones
    are ambiguous and rejected.
    """
    verdicts = {m.lower() for m in _CORRECT_RE.findall(judge_text)}
    if not verdicts:
        raise UnparseableJudgment("no 'correct:' field found")
    if len(verdicts) > 1:
        raise UnparseableJudgment("conflicting 'correct:' fields")
    confidence_match = _CONFIDENCE_RE.search(judge_text)
    confidence = float(confidence_match.group(1)) if confidence_match else 100.0
    return Judgment(correct=verdicts.pop() == "yes", confidence=confidence)


def score(
    trajectory: Trajectory,
    gold_answer: str,
    judge_backend: InferenceBackend,
    config: RunConfig,
) -> ScoreResult:
    """Score one finished trajectory against the gold answer."""
    if trajectory.status is TrajectoryStatus.PENDING:
        raise InvalidInput("cannot score an unfinished trajectory")
    if trajectory.status is not TrajectoryStatus.ANSWERED or trajectory.answer is None:
        return ScoreResult(reward=0.0, judged=True)

    messages = render_judge_prompt(trajectory.question, trajectory.answer, gold_answer)
    last: Exception | None = None
    for _ in range(JUDGE_ATTEMPTS):
        try:
            completion = judge_backend.complete(
                messages, temperature=0.0, max_tokens=config.judge_max_response_tokens
            )
            judgment = parse_judgment(completion.text)
            return ScoreResult(
                reward=1.0 if judgment.correct else 0.0, judged=True, judgment=judgment
            )
        except (UnparseableJudgment, BackendError) as exc:
            last = exc
    logger.warning("judge failed %d times (%s); defaulting reward to 0", JUDGE_ATTEMPTS, last)
    return ScoreResult(reward=0.0, judged=False)


def score_group(
    trajectories: list[Trajectory],
    gold_answer: str,
    judge_backend: InferenceBackend,
    config: RunConfig,
) -> list[Trajectory]:
    """Score a whole group concurrently; returns trajectories with rewards set."""
    def one(trajectory: Trajectory) -> Trajectory:
        result = score(trajectory, gold_answer, judge_backend, config)
        return replace(trajectory, reward=result.reward, judged=result.judged)

    workers = min(config.max_concurrency, max(len(trajectories), 1))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, trajectories))


def broadcast_rewards(
    trajectories: list[Trajectory],
    sys1_samples: list[Sys1Sample] | tuple[Sys1Sample, ...],
) -> list[Sys1Sample]:
    """Give every distillation sample its trajectory's reward."""
    rewards: dict[str, float] = {}
    for trajectory in trajectories:
        if trajectory.reward is None:
            raise InvalidInput(
                f"trajectory {trajectory.trajectory_id} has no reward; score the group first"
            )
        rewards[trajectory.trajectory_id] = trajectory.reward

    broadcast: list[Sys1Sample] = []
    for sample in sys1_samples:
        if sample.trajectory_id not in rewards:
            raise OrphanSample(f"sample references unknown trajectory {sample.trajectory_id}")
        broadcast.append(replace(sample, reward=rewards[sample.trajectory_id]))
    return broadcast
