"""Group-relative advantage math, sample balancing, masking, and losses.

Advantages are computed over the complete pre-sampling set with population
standard deviation; balancing never changes an advantage value. The policy
loss negates the clipped surrogate so that lower is better, and the KL term
uses the non-negative sampled-token estimator exp(d) - d - 1 with
d = ref - new.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import Sys1Sample, Sys2Sample, Tokenizer, Trajectory, WhitespaceTokenizer
from .errors import (
    BatchInvariantViolation,
    DecodeError,
    EmptyGroup,
    EmptySys1,
    InvalidInput,
    MaskMismatch,
    NoTrainableTokens,
    PrematureBalancing,
)
from .protocol import ToolSpec, default_tool_specs, render_system2_messages

DEGENERATE_STD = 1e-8
BATCH_FORMAT_VERSION = 1


@dataclass(frozen=True)
class AdvantageGroup:
    """Rewards and their group-normalized advantages for one system."""

    system: str  # "sys1" | "sys2"
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    mean: float
    std: float


def normalize_group(rewards: Sequence[float]) -> list[float]:
    """Group-normalize rewards: (r - mean) / population std.

    Degenerate groups (std below 1e-8, e.g. all rewards equal) yield all-zero
    advantages rather than dividing by zero.
    """
    if len(rewards) == 0:
        raise EmptyGroup("cannot normalize an empty reward group")
    n = len(rewards)
    mean = sum(rewards) / n
    variance = sum((r - mean) ** 2 for r in rewards) / n
    std = math.sqrt(variance)
    if std < DEGENERATE_STD:
        return [0.0] * n
    return [(r - mean) / std for r in rewards]


def advantage_group(system: str, rewards: Sequence[float]) -> AdvantageGroup:
    """Bundle rewards with their advantages and the group statistics."""
    advantages = normalize_group(rewards)
    n = len(rewards)
    mean = sum(rewards) / n
    std = math.sqrt(sum((r - mean) ** 2 for r in rewards) / n)
    return AdvantageGroup(
        system=system,
        rewards=tuple(rewards),
        advantages=tuple(advantages),
        mean=mean,
        std=std,
    )


def balance_sys1(
    samples: Sequence[Sys1Sample],
    group_size: int,
    rng: random.Random,
) -> list[Sys1Sample]:
    """Resize the distillation sample set to exactly ``group_size``.

    Requires advantages to be assigned already (balancing must never distort
    the advantage distribution). Oversized sets are downsampled uniformly
    without replacement, keeping original order; undersized sets keep every
    original and append random duplicates.
    """
    if group_size < 1:
        raise InvalidInput("group size must be >= 1")
    for sample in samples:
        if sample.advantage is None or sample.reward is None:
            raise PrematureBalancing(
                "balance_sys1 called before advantages were assigned to every sample"
            )
    m = len(samples)
    if m == 0:
        raise EmptySys1("group produced no distillation samples")
    if m == group_size:
        return list(samples)
    if m > group_size:
        chosen = sorted(rng.sample(range(m), group_size))
        return [samples[i] for i in chosen]
    extra = [samples[rng.randrange(m)] for _ in range(group_size - m)]
    return list(samples) + extra


def linearize_messages(messages) -> list[tuple[str, bool]]:
    """Flatten chat messages to (text, generated) spans.

    Role markers and non-assistant content are not generated; assistant
    content is. This is the canonical token layout of a reasoning sample.
    """
    spans: list[tuple[str, bool]] = []
    for message in messages:
        spans.append((f"<|{message.role}|>\n", False))
        spans.append((message.content, message.role == "assistant"))
        spans.append(("\n", False))
    return spans


def build_sys2_sample(
    trajectory: Trajectory,
    tokenizer: Tokenizer | None = None,
    *,
    advantage: float = 0.0,
    tool_specs: tuple[ToolSpec, ...] | None = None,
) -> Sys2Sample:
    """Tokenize the full rendered context with the generation mask.

    The mask is true exactly on assistant-generated spans; every distilled
    block, prompt, and tool echo is false. The trajectory's recorded
    log-probabilities must line up with the masked-true positions, otherwise
    the bookkeeping is broken and MaskMismatch is raised.
    """
    if trajectory.reward is None:
        raise InvalidInput("build_sys2_sample needs a scored trajectory")
    tokenizer = tokenizer or WhitespaceTokenizer()
    specs = default_tool_specs() if tool_specs is None else tool_specs
    messages = render_system2_messages(trajectory, specs)

    token_ids: list[int] = []
    mask: list[bool] = []
    for text, generated in linearize_messages(messages):
        ids = tokenizer.encode(text)
        token_ids.extend(ids)
        mask.extend([generated] * len(ids))

    logprobs: list[float] = []
    for turn in trajectory.turns:
        logprobs.extend(turn.logprobs)
    if sum(mask) != len(logprobs):
        raise MaskMismatch(
            f"mask marks {sum(mask)} generated tokens but {len(logprobs)} "
            "log-probabilities were recorded at rollout time"
        )
    return Sys2Sample(
        trajectory_id=trajectory.trajectory_id,
        token_ids=tuple(token_ids),
        loss_mask=tuple(mask),
        logprobs=tuple(logprobs),
        reward=trajectory.reward,
        advantage=advantage,
    )


def policy_loss(
    new_logprobs: Sequence[float],
    old_logprobs: Sequence[float],
    advantage: float,
    mask: Sequence[bool],
    epsilon: float,
) -> float:
    """Clipped surrogate policy loss over the unmasked tokens.

    Per token: ratio = exp(new - old), term = min(ratio * A,
    clip(ratio, 1-eps, 1+eps) * A). Returns the negated mean so that lower is
    better; on-policy data (new == old) gives exactly -A.
    """
    if not (len(new_logprobs) == len(old_logprobs) == len(mask)):
        raise InvalidInput("log-probability and mask sequences must be aligned")
    terms: list[float] = []
    for new, old, keep in zip(new_logprobs, old_logprobs, mask):
        if not keep:
            continue
        ratio = math.exp(new - old)
        clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
        terms.append(min(ratio * advantage, clipped * advantage))
    if not terms:
        raise NoTrainableTokens("every token is masked out")
    return -sum(terms) / len(terms)


def kl_loss(
    logprobs: Sequence[float],
    ref_logprobs: Sequence[float],
    mask: Sequence[bool],
) -> float:
    """Mean non-negative KL estimate over the unmasked tokens.

    Uses k(d) = exp(d) - d - 1 with d = ref - new on the sampled tokens; zero
    iff the policies agree everywhere that counts.
    """
    if not (len(logprobs) == len(ref_logprobs) == len(mask)):
        raise InvalidInput("log-probability and mask sequences must be aligned")
    terms: list[float] = []
    for new, ref, keep in zip(logprobs, ref_logprobs, mask):
        if not keep:
            continue
        delta = ref - new
        terms.append(math.exp(delta) - delta - 1.0)
    if not terms:
        raise NoTrainableTokens("every token is masked out")
    return sum(terms) / len(terms)


@dataclass(frozen=True)
class SampleLoss:
    """Per-sample loss components."""

    policy: float
    kl: float = 0.0


def total_loss(
    sys2_losses: Sequence[SampleLoss],
    sys1_losses: Sequence[SampleLoss],
    kl_coefficient: float,
) -> float:
    """Combined objective: per-system mean of (policy + coeff * kl), summed.

    An empty distillation side contributes nothing (flagged groups); an empty
    reasoning side is an error.
    """
    if not sys2_losses:
        raise EmptyGroup("no reasoning-side losses")

    def side(losses: Sequence[SampleLoss]) -> float:
        return sum(l.policy + kl_coefficient * l.kl for l in losses) / len(losses)

    result = side(sys2_losses)
    if sys1_losses:
        result += side(sys1_losses)
    return result


@dataclass(frozen=True)
class TrainingBatch:
    """One question's training-ready batch: G reasoning + G distillation samples."""

    question_id: str
    group_size: int
    sys2_samples: tuple[Sys2Sample, ...]
    sys1_samples: tuple[Sys1Sample, ...]
    sys1_empty: bool
    config_digest: str
    manifest_ref: str = ""


def _sys2_record(sample: Sys2Sample, config_digest: str) -> dict:
    if sum(sample.loss_mask) != len(sample.logprobs):
        raise MaskMismatch("sys2 sample mask/log-probability counts disagree")
    return {
        "record": "sample",
        "sample_kind": "sys2",
        "trajectory_id": sample.trajectory_id,
        "token_ids": list(sample.token_ids),
        "loss_mask": [1 if b else 0 for b in sample.loss_mask],
        "logprobs": list(sample.logprobs),
        "ref_logprobs": list(sample.ref_logprobs) if sample.ref_logprobs is not None else None,
        "reward": sample.reward,
        "advantage": sample.advantage,
        "config_digest": config_digest,
    }


def _sys1_record(sample: Sys1Sample, config_digest: str, tokenizer: Tokenizer) -> dict:
    input_ids = tokenizer.encode(sample.packed_input)
    output_ids = tokenizer.encode(sample.output)
    if sample.logprobs and len(sample.logprobs) != len(output_ids):
        raise MaskMismatch(
            f"sys1 sample has {len(sample.logprobs)} log-probabilities for "
            f"{len(output_ids)} output tokens"
        )
    return {
        "record": "sample",
        "sample_kind": "sys1",
        "trajectory_id": sample.trajectory_id,
        "token_ids": input_ids + output_ids,
        "loss_mask": [0] * len(input_ids) + [1] * len(output_ids),
        "logprobs": list(sample.logprobs),
        "ref_logprobs": list(sample.ref_logprobs) if sample.ref_logprobs is not None else None,
        "reward": sample.reward,
        "advantage": sample.advantage,
        "config_digest": config_digest,
    }


def emit_batch(
    sys2_samples: Sequence[Sys2Sample],
    sys1_samples: Sequence[Sys1Sample],
    *,
    question_id: str,
    group_size: int,
    config_digest: str,
    manifest_ref: str = "",
    sys1_empty: bool = False,
    path: str | Path | None = None,
    tokenizer: Tokenizer | None = None,
) -> TrainingBatch:
    """Validate counts and completeness, then optionally persist the batch.

    The file is line-delimited JSON with a header record followed by one
    record per sample (see docs/formats.md); identical inputs always produce
    identical bytes.
    """
    if len(sys2_samples) != group_size:
        raise BatchInvariantViolation(
            f"expected {group_size} reasoning samples, got {len(sys2_samples)}"
        )
    if sys1_empty:
        if sys1_samples:
            raise BatchInvariantViolation("batch flagged sys1-empty but has distillation samples")
    elif len(sys1_samples) != group_size:
        raise BatchInvariantViolation(
            f"expected {group_size} distillation samples, got {len(sys1_samples)}"
        )
    for sample in sys1_samples:
        if sample.reward is None or sample.advantage is None:
            raise BatchInvariantViolation("every distillation sample needs reward and advantage")

    batch = TrainingBatch(
        question_id=question_id,
        group_size=group_size,
        sys2_samples=tuple(sys2_samples),
        sys1_samples=tuple(sys1_samples),
        sys1_empty=sys1_empty,
        config_digest=config_digest,
        manifest_ref=manifest_ref,
    )
    if path is not None:
        write_batch(batch, path, tokenizer=tokenizer)
    return batch


def write_batch(batch: TrainingBatch, path: str | Path, tokenizer: Tokenizer | None = None) -> None:
    """Persist a batch as line-delimited JSON (header first, then samples)."""
    tokenizer = tokenizer or WhitespaceTokenizer()
    header = {
        "record": "header",
        "format_version": BATCH_FORMAT_VERSION,
        "question_id": batch.question_id,
        "group_size": batch.group_size,
        "sys1_empty": batch.sys1_empty,
        "config_digest": batch.config_digest,
        "manifest_ref": batch.manifest_ref,
    }
    records = [header]
    records.extend(_sys2_record(s, batch.config_digest) for s in batch.sys2_samples)
    records.extend(_sys1_record(s, batch.config_digest, tokenizer) for s in batch.sys1_samples)
    text = "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)
    Path(path).write_text(text, encoding="utf-8")


def read_batch_records(path: str | Path) -> tuple[dict, list[dict]]:
    """Read a persisted batch back as (header, sample records)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DecodeError("batch file is empty", offset=0)
    offset = 0
    parsed: list[dict] = []
    for line in lines:
        try:
            parsed.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DecodeError(f"corrupt batch record: {exc}", offset=offset + exc.pos) from exc
        offset += len(line) + 1
    header, samples = parsed[0], parsed[1:]
    if header.get("record") != "header":
        raise DecodeError("first record is not a header", offset=0)
    return header, samples
