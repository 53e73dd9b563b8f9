"""End-to-end workflows: group rollouts to training batches, plus telemetry.

``build_group_batch`` is the full path for one question: G rollouts, judging,
advantage normalization over the complete sample sets, reward broadcast,
balancing, and batch emission. ``run_batch_job`` drives a whole question file
into a self-describing run directory.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .core import (
    RunConfig,
    Sys1Sample,
    Tokenizer,
    TrajectoryStatus,
    WhitespaceTokenizer,
    derive_seed,
)
from .grpo import TrainingBatch, advantage_group, balance_sys1, build_sys2_sample, emit_batch
from .inference import InferenceBackend
from .judge import broadcast_rewards, score_group
from .protocol import ToolSpec
from .rollout import RolloutResult, run_group
from .store import (
    RunCounters,
    RunManifest,
    RunPaths,
    config_digest,
    save_trajectory,
    load_trajectory,
    write_manifest,
)
from .templates import template_digests
from .toolbox import Toolbox


@dataclass(frozen=True)
class QuestionSpec:
    """One training question with its gold answer."""

    question: str
    gold_answer: str


@dataclass(frozen=True)
class GroupArtifacts:
    """Everything produced for one question's group."""

    question_id: str
    batch: TrainingBatch
    results: tuple[RolloutResult, ...]  # scored trajectories, advantaged samples


def question_id(question: str) -> str:
    return hashlib.sha256(question.encode("utf-8")).hexdigest()[:16]


def build_group_batch(
    question: str,
    gold_answer: str,
    *,
    backend: InferenceBackend,
    judge_backend: InferenceBackend,
    tools: Toolbox,
    config: RunConfig,
    tokenizer: Tokenizer | None = None,
    group_size: int | None = None,
    tool_specs: tuple[ToolSpec, ...] | None = None,
    manifest_ref: str = "",
    batch_path: str | Path | None = None,
) -> GroupArtifacts:
    """Run one question through the whole pipeline and emit its batch.

    Advantages are computed over all samples of each system before any
    balancing; distillation samples inherit their trajectory's reward.
    """
    tokenizer = tokenizer or WhitespaceTokenizer()
    size = config.group_size if group_size is None else group_size
    qid = question_id(question)

    results = run_group(
        question, backend, tools, config,
        group_size=size, tokenizer=tokenizer, tool_specs=tool_specs,
    )
    scored = score_group([r.trajectory for r in results], gold_answer, judge_backend, config)

    sys2_group = advantage_group("sys2", [t.reward for t in scored])
    sys2_samples = [
        build_sys2_sample(trajectory, tokenizer, advantage=advantage, tool_specs=tool_specs)
        for trajectory, advantage in zip(scored, sys2_group.advantages)
    ]

    raw_sys1 = [sample for result in results for sample in result.sys1_samples]
    rewarded = broadcast_rewards(scored, raw_sys1)
    if rewarded:
        sys1_group = advantage_group("sys1", [s.reward for s in rewarded])
        advantaged = [replace(s, advantage=a) for s, a in zip(rewarded, sys1_group.advantages)]
        rng = random.Random(derive_seed(config.rng_seed, f"balance:{qid}"))
        balanced = balance_sys1(advantaged, size, rng)
        sys1_empty = False
    else:
        advantaged = []
        balanced = []
        sys1_empty = True

    batch = emit_batch(
        sys2_samples,
        balanced,
        question_id=qid,
        group_size=size,
        config_digest=config_digest(config),
        manifest_ref=manifest_ref,
        sys1_empty=sys1_empty,
        path=batch_path,
        tokenizer=tokenizer,
    )

    by_trajectory: dict[str, list[Sys1Sample]] = {t.trajectory_id: [] for t in scored}
    for sample in advantaged:
        by_trajectory[sample.trajectory_id].append(sample)
    scored_results = tuple(
        RolloutResult(trajectory=t, sys1_samples=tuple(by_trajectory[t.trajectory_id]))
        for t in scored
    )
    return GroupArtifacts(question_id=qid, batch=batch, results=scored_results)


def accumulate_counters(
    counters: RunCounters,
    results: Sequence[RolloutResult],
    tokenizer: Tokenizer,
) -> None:
    """Fold one group's results into the run counters."""
    for result in results:
        trajectory = result.trajectory
        counters.trajectories += 1
        if trajectory.status is TrajectoryStatus.ANSWERED:
            counters.answered += 1
        if trajectory.status is TrajectoryStatus.ABORTED:
            counters.aborted += 1
        counters.reward_total += trajectory.reward or 0.0
        for turn in trajectory.turns:
            if turn.request is not None:
                counters.tool_calls[turn.request.kind.value] += 1
            counters.bins += turn.bin_count
            if turn.completion is not None:
                counters.observe_response(tokenizer.count(turn.completion))
        for sample in result.sys1_samples:
            counters.sys1_samples += 1
            counters.observe_response(tokenizer.count(sample.output))


def run_batch_job(
    questions: Sequence[QuestionSpec],
    run_dir: str | Path,
    *,
    backend: InferenceBackend,
    judge_backend: InferenceBackend,
    tools: Toolbox,
    config: RunConfig,
    tokenizer: Tokenizer | None = None,
    tool_specs: tuple[ToolSpec, ...] | None = None,
    backend_desc: dict[str, str] | None = None,
    provider_desc: dict[str, str] | None = None,
) -> RunManifest:
    """Process a whole question file into a run directory.

    Layout: manifest.json, trajectories/, batches/, cache/. The manifest is
    written once, at the end, and its counters can be recomputed from the
    stored logs.
    """
    tokenizer = tokenizer or WhitespaceTokenizer()
    paths = RunPaths(Path(run_dir)).create()
    counters = RunCounters()
    started_at = _utc_now()

    questions_file = paths.root / "questions.jsonl"
    if not questions_file.exists():
        questions_file.write_text(
            "".join(
                json.dumps({"question": q.question, "answer": q.gold_answer}, sort_keys=True)
                + "\n"
                for q in questions
            ),
            encoding="utf-8",
        )

    for spec in questions:
        qid = question_id(spec.question)
        artifacts = build_group_batch(
            spec.question,
            spec.gold_answer,
            backend=backend,
            judge_backend=judge_backend,
            tools=tools,
            config=config,
            tokenizer=tokenizer,
            tool_specs=tool_specs,
            manifest_ref="manifest.json",
            batch_path=paths.batches / f"{qid}.jsonl",
        )
        counters.batches += 1
        accumulate_counters(counters, artifacts.results, tokenizer)
        for index, result in enumerate(artifacts.results):
            save_trajectory(result, paths.trajectories / f"{qid}-{index:02d}.json")

    manifest = RunManifest(
        config=config,
        seed=config.rng_seed,
        template_digests=template_digests(),
        providers=provider_desc or {},
        backend=backend_desc or {},
        started_at=started_at,
        finished_at=_utc_now(),
        counters=counters,
    )
    write_manifest(manifest, paths.manifest)
    return manifest


def recompute_counters(run_dir: str | Path, tokenizer: Tokenizer | None = None) -> RunCounters:
    """Rebuild the manifest counters from the stored trajectory logs."""
    tokenizer = tokenizer or WhitespaceTokenizer()
    paths = RunPaths(Path(run_dir))
    counters = RunCounters()
    results = [load_trajectory(p) for p in sorted(paths.trajectories.glob("*.json"))]
    accumulate_counters(counters, results, tokenizer)
    counters.batches = len(sorted(paths.batches.glob("*.jsonl")))
    return counters


def stats_lines(counters: RunCounters) -> list[str]:
    """Telemetry table: tools per question, usage ratios, response lengths."""
    lines = [
        f"trajectories:        {counters.trajectories}",
        f"answered:            {counters.answered}",
        f"aborted:             {counters.aborted}",
        f"batches:             {counters.batches}",
    ]
    if counters.trajectories:
        reward_mean = counters.reward_total / counters.trajectories
        total_tools = sum(counters.tool_calls.values())
        lines.append(f"mean reward:         {reward_mean:.4f}")
        lines.append(f"tools per trajectory: {total_tools / counters.trajectories:.4f}")
        for kind, count in sorted(counters.tool_calls.items()):
            ratio = count / total_tools if total_tools else 0.0
            lines.append(f"  {kind} calls:       {count} ({ratio:.1%})")
    lines.append(f"bins:                {counters.bins}")
    lines.append(f"sys1 samples:        {counters.sys1_samples}")
    if counters.response_count:
        lines.append(
            "response tokens:     "
            f"min {counters.response_tokens_min} / "
            f"mean {counters.response_tokens_mean:.1f} / "
            f"max {counters.response_tokens_max}"
        )
    return lines


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
