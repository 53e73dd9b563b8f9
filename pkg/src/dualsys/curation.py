"""Training-question curation: dedup, clarity/expert filters, difficulty banding.

Stages run in a fixed order and each stage only ever removes items. Judge
failures drop the item (with a log line), never the run.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .core import Message, RunConfig
from .errors import BackendError, UnparseableJudgment
from .inference import InferenceBackend
from .templates import CLARITY_PROMPT, EXPERT_LEVEL_PROMPT

logger = logging.getLogger(__name__)

SHINGLE_SIZE = 3
NEAR_DUPLICATE_THRESHOLD = 0.9
BON_ATTEMPTS = 16
BON_KEEP_RANGE = (1, 12)
_BINARY_RE = re.compile(r"\b([01])\b")


@dataclass(frozen=True)
class CandidateQA:
    """One candidate training question with its per-stage flags."""

    prompt: str
    gold_answer: str
    subject: str = ""
    provenance: str = ""
    deduped: bool | None = None
    clarity: int | None = None
    expert: int | None = None
    bon_correct_count: int | None = None


@dataclass(frozen=True)
class StageCount:
    stage: str
    entering: int
    surviving: int


@dataclass(frozen=True)
class PipelineReport:
    stages: tuple[StageCount, ...]

    def as_lines(self) -> list[str]:
        return [f"{s.stage}: {s.entering} -> {s.surviving}" for s in self.stages]

    def to_dict(self) -> dict:
        return {
            "stages": [
                {"stage": s.stage, "entering": s.entering, "surviving": s.surviving}
                for s in self.stages
            ]
        }

    def save(self, path) -> None:
        import json
        from pathlib import Path

        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )


def normalize_prompt(text: str) -> str:
    return " ".join(text.split()).lower()


def shingles(text: str, size: int = SHINGLE_SIZE) -> frozenset[str]:
    words = normalize_prompt(text).split()
    if len(words) < size:
        return frozenset({" ".join(words)}) if words else frozenset()
    return frozenset(" ".join(words[i : i + size]) for i in range(len(words) - size + 1))


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def dedup(
    candidates: Sequence[CandidateQA],
    *,
    threshold: float = NEAR_DUPLICATE_THRESHOLD,
) -> list[CandidateQA]:
    """Drop exact duplicates (after normalization) and near-duplicates.

    Near-duplicates are pairs whose word-shingle Jaccard similarity reaches
    the threshold; the first occurrence always survives. Idempotent.
    """
    survivors: list[CandidateQA] = []
    seen_exact: set[str] = set()
    seen_shingles: list[frozenset[str]] = []
    for candidate in candidates:
        normalized = normalize_prompt(candidate.prompt)
        if normalized in seen_exact:
            continue
        candidate_shingles = shingles(candidate.prompt)
        if any(jaccard(candidate_shingles, prior) >= threshold for prior in seen_shingles):
            continue
        seen_exact.add(normalized)
        seen_shingles.append(candidate_shingles)
        survivors.append(replace(candidate, deduped=True))
    return survivors


def _binary_verdict(text: str) -> int:
    stripped = text.strip()
    if stripped in ("0", "1"):
        return int(stripped)
    match = _BINARY_RE.search(stripped)
    if not match:
        raise UnparseableJudgment(f"expected a 0/1 verdict, got {text!r}")
    return int(match.group(1))


def _judge_binary(
    template: str,
    qa: CandidateQA,
    judge_backend: InferenceBackend,
    *,
    examples: str,
    attempts: int = 3,
) -> int:
    qa_pair = f"Question: {qa.prompt}\nAnswer: {qa.gold_answer}"
    prompt = template.format(examples=examples or "(none)", qa_pair=qa_pair)
    messages = [Message("user", prompt)]
    last: Exception | None = None
    for _ in range(attempts):
        try:
            completion = judge_backend.complete(messages, temperature=0.0, max_tokens=8)
            return _binary_verdict(completion.text)
        except (UnparseableJudgment, BackendError) as exc:
            last = exc
    raise UnparseableJudgment(f"judge gave no usable verdict after {attempts} attempts: {last}")


def judge_clarity(
    qa: CandidateQA,
    judge_backend: InferenceBackend,
    *,
    examples: str = "",
) -> int:
    """1 if the question is unambiguous with a unique answer, else 0."""
    return _judge_binary(CLARITY_PROMPT, qa, judge_backend, examples=examples)


def judge_expert_level(
    qa: CandidateQA,
    judge_backend: InferenceBackend,
    *,
    examples: str = "",
) -> int:
    """1 if the question demands graduate-level expertise, else 0."""
    return _judge_binary(EXPERT_LEVEL_PROMPT, qa, judge_backend, examples=examples)


def bon_difficulty_filter(
    qa: CandidateQA,
    rollout_fn: Callable[[CandidateQA], int],
    *,
    n_attempts: int = BON_ATTEMPTS,
    keep_range: tuple[int, int] = BON_KEEP_RANGE,
) -> tuple[bool, int]:
    """Run ``n_attempts`` independent judged attempts and band by difficulty.

    ``rollout_fn`` performs one full search-enabled attempt and returns its
    judged 0/1 outcome; attempt failures count as 0. Kept iff the correct
    count lies inside ``keep_range`` (inclusive): 0 means likely-unanswerable,
    above the band means trivial.
    """
    correct = 0
    for attempt in range(n_attempts):
        try:
            correct += 1 if rollout_fn(qa) else 0
        except Exception as exc:  # noqa: BLE001 - attempt failures score 0
            logger.warning("BoN attempt %d failed for %r: %s", attempt, qa.prompt[:60], exc)
    low, high = keep_range
    return (low <= correct <= high), correct


def run_pipeline(
    candidates: Sequence[CandidateQA],
    *,
    judge_backend: InferenceBackend,
    rollout_fn: Callable[[CandidateQA], int],
    config: RunConfig | None = None,
    level_filter: Callable[[CandidateQA], bool] | None = None,
    examples: str = "",
    n_attempts: int = BON_ATTEMPTS,
    keep_range: tuple[int, int] = BON_KEEP_RANGE,
) -> tuple[list[CandidateQA], PipelineReport]:
    """Run the full filtering funnel and report per-stage counts.

    Order: academic-level filter, dedup, clarity judging, expert-level
    judging, best-of-N difficulty banding. ``level_filter`` defaults to
    keeping everything (the heuristic is deployment-specific).
    """
    config = config or RunConfig()
    stages: list[StageCount] = []

    def record(stage: str, entering: Sequence, surviving: Sequence):
        stages.append(StageCount(stage=stage, entering=len(entering), surviving=len(surviving)))

    current = list(candidates)
    leveled = [c for c in current if level_filter is None or _safe_filter(level_filter, c)]
    record("level", current, leveled)

    deduped = dedup(leveled)
    record("dedup", leveled, deduped)

    clear = _judge_stage(deduped, judge_backend, config, judge_clarity, "clarity", examples)
    clear = [replace(c, clarity=1) for c in clear]
    record("clarity", deduped, clear)

    expert = _judge_stage(clear, judge_backend, config, judge_expert_level, "expert", examples)
    expert = [replace(c, expert=1) for c in expert]
    record("expert", clear, expert)

    banded: list[CandidateQA] = []
    for candidate in expert:
        keep, count = bon_difficulty_filter(
            candidate, rollout_fn, n_attempts=n_attempts, keep_range=keep_range
        )
        if keep:
            banded.append(replace(candidate, bon_correct_count=count))
    record("bon", expert, banded)

    return banded, PipelineReport(stages=tuple(stages))


def _safe_filter(level_filter: Callable[[CandidateQA], bool], candidate: CandidateQA) -> bool:
    try:
        return bool(level_filter(candidate))
    except Exception as exc:  # noqa: BLE001 - stage failures drop the item
        logger.warning("level filter failed for %r: %s", candidate.prompt[:60], exc)
        return False


def _judge_stage(
    candidates: Sequence[CandidateQA],
    judge_backend: InferenceBackend,
    config: RunConfig,
    judge_fn,
    stage: str,
    examples: str,
) -> list[CandidateQA]:
    def one(candidate: CandidateQA) -> CandidateQA | None:
        try:
            verdict = judge_fn(candidate, judge_backend, examples=examples)
        except UnparseableJudgment as exc:
            logger.warning("%s judging failed for %r: %s", stage, candidate.prompt[:60], exc)
            return None
        return candidate if verdict == 1 else None

    workers = min(config.max_concurrency, max(len(candidates), 1))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, candidates))
    return [c for c in results if c is not None]
