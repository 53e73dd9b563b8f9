"""Multi-turn rollout loop coordinating both agent roles and the tools.

Each turn: render the researcher prompt, generate, parse. A tool request is
executed, its outputs packed into bins, and each bin distilled concurrently;
the combined distillation re-enters the context. Python results bypass
distillation. The loop ends on an answer, on turn exhaustion, or on a context
budget overflow (treated like turn exhaustion: no answer, reward 0).
"""

from __future__ import annotations

import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from .binpack import pack
from .core import (
    Message,
    RunConfig,
    Sys1Sample,
    Tokenizer,
    ToolKind,
    ToolOutput,
    Trajectory,
    TrajectoryStatus,
    Turn,
    WhitespaceTokenizer,
    append_turn,
    derive_seed,
    new_trajectory,
)
from .errors import (
    AmbiguousStep,
    BackendError,
    DistillFailure,
    InvalidCapacity,
    InvalidInput,
    MalformedTags,
    MalformedToolCall,
    SandboxTimeout,
    ToolError,
)
from .inference import InferenceBackend
from .protocol import (
    ToolSpec,
    default_tool_specs,
    extract_answer,
    parse_system2_output,
    render_output_block,
    render_system1_messages,
    render_system2_messages,
)
from .templates import DISTILLER_SYSTEM, DISTILLER_USER
from .toolbox import Toolbox

logger = logging.getLogger(__name__)

FAILED_CHUNK_MARKER = "[distillation failed for this block]"
NO_RESULTS_OBSERVATION = "[no results returned]"


@dataclass(frozen=True)
class RolloutResult:
    """One finished trajectory plus the distillation pairs it produced."""

    trajectory: Trajectory
    sys1_samples: tuple[Sys1Sample, ...]

    def __post_init__(self) -> None:
        expected = sum(turn.bin_count for turn in self.trajectory.turns)
        if expected != len(self.sys1_samples):
            raise ValueError(
                f"sys1 sample count {len(self.sys1_samples)} != total bin count {expected}"
            )


def prompt_token_count(messages: list[Message], counter) -> int:
    """Token count of a prompt under the active counter (content only)."""
    return sum(counter(m.content) for m in messages)


def effective_sys1_capacity(
    outputs: list[ToolOutput] | tuple[ToolOutput, ...],
    purpose: str,
    question: str,
    config: RunConfig,
    counter,
) -> int:
    """Per-bin content budget that keeps every rendered distiller prompt
    within ``sys1_max_prompt_tokens``.

    Reserves the template frame plus the header lines (with truncation
    marker) of every output in the request; any bin holds a subset of those
    outputs, so the reservation is always sufficient.
    """
    skeleton = "\n\n".join(
        render_output_block(replace(o, content="", truncated=True)) for o in outputs
    )
    frame = DISTILLER_USER.format(tool_outputs=skeleton, purpose=purpose, question=question)
    overhead = counter(DISTILLER_SYSTEM) + counter(frame)
    capacity = config.sys1_max_prompt_tokens - overhead
    if capacity <= 0:
        raise InvalidCapacity(
            f"sys1 prompt budget {config.sys1_max_prompt_tokens} cannot cover the "
            f"template overhead of {overhead} tokens"
        )
    return capacity


def distill(
    outputs: list[ToolOutput] | tuple[ToolOutput, ...],
    purpose: str,
    question: str,
    backend: InferenceBackend,
    config: RunConfig,
    *,
    tokenizer: Tokenizer | None = None,
    trajectory_id: str = "",
    turn_index: int = 0,
    seed: int | None = None,
) -> tuple[str, list[Sys1Sample]]:
    """Pack outputs into bins and distill each bin once, in parallel.

    Returns the bin-order concatenation of chunk outputs (separated by the
    configured labeled separator) and the training pairs. A failed bin is
    replaced by an error marker in the combined text and produces no pair;
    if every bin fails the turn cannot proceed and DistillFailure is raised.
    """
    if not outputs:
        raise DistillFailure("distill requires at least one tool output")
    tokenizer = tokenizer or WhitespaceTokenizer()
    capacity = effective_sys1_capacity(outputs, purpose, question, config, tokenizer.count)
    bins = pack(outputs, capacity, tokenizer.count)

    def one(index: int):
        messages = render_system1_messages(bins[index].items, purpose, question)
        gen_seed = derive_seed(seed, f"sys1:{turn_index}:{index}") if seed is not None else None
        return messages, backend.complete(
            messages,
            temperature=config.temperature,
            max_tokens=config.sys1_max_response_tokens,
            seed=gen_seed,
        )

    chunks: list[str] = []
    pairs: list[Sys1Sample] = []
    workers = min(config.max_concurrency, len(bins))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(one, j) for j in range(len(bins))]
        for j, future in enumerate(futures):
            try:
                messages, completion = future.result()
            except BackendError as exc:
                logger.warning("bin %d distillation failed: %s", j, exc)
                chunks.append(FAILED_CHUNK_MARKER)
                continue
            chunks.append(completion.text)
            pairs.append(
                Sys1Sample(
                    trajectory_id=trajectory_id,
                    turn_index=turn_index,
                    bin_index=j,
                    packed_input=messages[-1].content,
                    output=completion.text,
                    logprobs=completion.logprobs,
                )
            )
    if not pairs:
        raise DistillFailure(f"all {len(bins)} bins failed to distill")

    combined = chunks[0]
    for j in range(1, len(chunks)):
        combined += config.chunk_separator.format(index=j + 1) + chunks[j]
    return combined, pairs


def run_trajectory(
    question: str,
    backend: InferenceBackend,
    tools: Toolbox,
    config: RunConfig,
    *,
    tokenizer: Tokenizer | None = None,
    tool_specs: tuple[ToolSpec, ...] | None = None,
    seed: int | None = None,
    trajectory_id: str | None = None,
) -> RolloutResult:
    """Run one question to completion and collect its distillation pairs."""
    tokenizer = tokenizer or WhitespaceTokenizer()
    specs = default_tool_specs() if tool_specs is None else tool_specs
    # the question joins the derivation so equal seeds on different questions
    # still mint distinct, audit-friendly ids
    rng = random.Random(derive_seed(seed, "trajectory-id", question)) if seed is not None else None
    traj = new_trajectory(
        question, max_turns=config.max_turns, rng=rng, trajectory_id=trajectory_id
    )
    samples: list[Sys1Sample] = []

    for i in range(config.max_turns):
        messages = render_system2_messages(traj, specs)
        if prompt_token_count(messages, tokenizer.count) > config.sys2_max_prompt_tokens:
            traj = replace(
                traj,
                status=TrajectoryStatus.MAX_TURNS_EXCEEDED,
                abort_reason="context budget exhausted",
            )
            break

        gen_seed = derive_seed(seed, f"sys2:{i}") if seed is not None else None
        try:
            completion = backend.complete(
                messages,
                temperature=config.temperature,
                max_tokens=config.sys2_max_response_tokens,
                seed=gen_seed,
            )
        except BackendError as exc:
            traj = replace(traj, status=TrajectoryStatus.ABORTED, abort_reason=str(exc))
            break

        try:
            step = parse_system2_output(completion.text)
        except AmbiguousStep as exc:
            # Answer wins over the simultaneous tool call: terminate.
            turn = Turn(reasoning=exc.reasoning, completion=completion.text, logprobs=completion.logprobs)
            traj = replace(
                append_turn(traj, turn),
                answer=extract_answer(completion.text),
                status=TrajectoryStatus.ANSWERED,
            )
            break
        except MalformedToolCall as exc:
            turn = Turn(
                reasoning=exc.reasoning or "",
                error=f"[tool call could not be parsed: {exc}]",
                completion=completion.text,
                logprobs=completion.logprobs,
            )
            traj = append_turn(traj, turn)
            continue
        except MalformedTags as exc:
            turn = Turn(
                error=f"[output tags malformed: {exc}]",
                completion=completion.text,
                logprobs=completion.logprobs,
            )
            traj = append_turn(traj, turn)
            continue

        if step.answer is not None:
            turn = Turn(reasoning=step.reasoning, completion=completion.text, logprobs=completion.logprobs)
            traj = replace(
                append_turn(traj, turn),
                answer=extract_answer(completion.text),
                status=TrajectoryStatus.ANSWERED,
            )
            break

        if step.tool_request is None:
            turn = Turn(reasoning=step.reasoning, completion=completion.text, logprobs=completion.logprobs)
            traj = append_turn(traj, turn)
            continue

        request = step.tool_request
        try:
            outputs = tools.execute(request, config)
        except SandboxTimeout:
            turn = Turn(
                reasoning=step.reasoning,
                request=request,
                distilled=f"[python execution timed out after {config.sandbox_timeout_seconds:g}s]",
                completion=completion.text,
                logprobs=completion.logprobs,
            )
            traj = append_turn(traj, turn)
            continue
        except (ToolError, InvalidInput) as exc:  # tool infrastructure is down
            traj = replace(
                traj, status=TrajectoryStatus.ABORTED, abort_reason=f"tool failure: {exc}"
            )
            break

        if request.kind is ToolKind.PYTHON:
            distilled = outputs[0].content
            raw_count, bin_count = 1, 0
        elif not outputs:
            distilled = NO_RESULTS_OBSERVATION
            raw_count, bin_count = 0, 0
        else:
            try:
                distilled, pairs = distill(
                    outputs,
                    request.purpose,
                    question,
                    backend,
                    config,
                    tokenizer=tokenizer,
                    trajectory_id=traj.trajectory_id,
                    turn_index=i,
                    seed=seed,
                )
            except (DistillFailure, InvalidCapacity) as exc:
                traj = replace(
                    traj, status=TrajectoryStatus.ABORTED, abort_reason=f"distillation failed: {exc}"
                )
                break
            samples.extend(pairs)
            raw_count, bin_count = len(outputs), len(pairs)

        turn = Turn(
            reasoning=step.reasoning,
            request=request,
            distilled=distilled,
            raw_output_count=raw_count,
            bin_count=bin_count,
            completion=completion.text,
            logprobs=completion.logprobs,
        )
        traj = append_turn(traj, turn)

    if traj.status is TrajectoryStatus.PENDING:
        traj = replace(traj, status=TrajectoryStatus.MAX_TURNS_EXCEEDED)
    return RolloutResult(trajectory=traj, sys1_samples=tuple(samples))


def run_group(
    question: str,
    backend: InferenceBackend,
    tools: Toolbox,
    config: RunConfig,
    *,
    group_size: int | None = None,
    tokenizer: Tokenizer | None = None,
    tool_specs: tuple[ToolSpec, ...] | None = None,
) -> list[RolloutResult]:
    """Run ``group_size`` independent trajectories of one question concurrently.

    Per-trajectory seeds derive deterministically from (rng_seed, index), so
    a fixed seed plus replayed tools reproduces the whole group bit-for-bit.
    Aborted trajectories are kept in place, never dropped.
    """
    size = config.group_size if group_size is None else group_size
    if size < 1:
        raise InvalidInput("group size must be >= 1")

    def one(k: int) -> RolloutResult:
        return run_trajectory(
            question,
            backend,
            tools,
            config,
            tokenizer=tokenizer,
            tool_specs=tool_specs,
            seed=derive_seed(config.rng_seed, f"trajectory:{k}"),
        )

    workers = min(config.max_concurrency, size)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(size)))
