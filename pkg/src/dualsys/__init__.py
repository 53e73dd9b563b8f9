"""Dual-role LLM research rollouts and GRPO-ready training batches.

A researcher role reasons over many turns and calls tools; a distiller role
condenses bin-packed tool outputs back into the researcher's context. Groups
of rollouts are judged, normalized into advantages, balanced, and emitted as
training batches for an external trainer.
"""

from .binpack import Bin, pack, truncate
from .core import (
    Message,
    RunConfig,
    Sys1Sample,
    Sys2Sample,
    ToolKind,
    ToolOutput,
    ToolRequest,
    Trajectory,
    TrajectoryStatus,
    Turn,
    WhitespaceTokenizer,
    append_turn,
    context_elements,
    derive_seed,
    new_trajectory,
    whitespace_count,
)
from .grpo import (
    AdvantageGroup,
    SampleLoss,
    TrainingBatch,
    advantage_group,
    balance_sys1,
    build_sys2_sample,
    emit_batch,
    kl_loss,
    normalize_group,
    policy_loss,
    total_loss,
)
from .inference import CachingBackend, Completion, HttpChatBackend, InferenceBackend, ScriptedBackend
from .judge import (
    Judgment,
    ScoreResult,
    broadcast_rewards,
    parse_judgment,
    render_judge_prompt,
    score,
    score_group,
)
from .pipeline import QuestionSpec, build_group_batch, run_batch_job
from .protocol import (
    ParsedStep,
    ToolSpec,
    default_tool_specs,
    extract_answer,
    parse_system2_output,
    render_step,
    render_system1_messages,
    render_system2_messages,
)
from .rollout import RolloutResult, distill, effective_sys1_capacity, run_group, run_trajectory
from .toolbox import ReplayMode, ReplayStore, StaticProvider, StaticSandbox, Toolbox, with_replay

__version__ = "0.1.0"

__all__ = [
    "AdvantageGroup",
    "Bin",
    "CachingBackend",
    "Completion",
    "HttpChatBackend",
    "InferenceBackend",
    "Judgment",
    "Message",
    "ParsedStep",
    "QuestionSpec",
    "ReplayMode",
    "ReplayStore",
    "RolloutResult",
    "RunConfig",
    "SampleLoss",
    "ScoreResult",
    "ScriptedBackend",
    "StaticProvider",
    "StaticSandbox",
    "Sys1Sample",
    "Sys2Sample",
    "ToolKind",
    "ToolOutput",
    "ToolRequest",
    "ToolSpec",
    "Toolbox",
    "TrainingBatch",
    "Trajectory",
    "TrajectoryStatus",
    "Turn",
    "WhitespaceTokenizer",
    "advantage_group",
    "append_turn",
    "balance_sys1",
    "broadcast_rewards",
    "build_group_batch",
    "build_sys2_sample",
    "context_elements",
    "default_tool_specs",
    "derive_seed",
    "distill",
    "effective_sys1_capacity",
    "emit_batch",
    "extract_answer",
    "kl_loss",
    "new_trajectory",
    "normalize_group",
    "pack",
    "parse_judgment",
    "parse_system2_output",
    "policy_loss",
    "render_judge_prompt",
    "render_step",
    "render_system1_messages",
    "render_system2_messages",
    "run_batch_job",
    "run_group",
    "run_trajectory",
    "score",
    "score_group",
    "total_loss",
    "truncate",
    "whitespace_count",
    "with_replay",
]
