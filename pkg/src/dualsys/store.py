"""Persistence: trajectory logs, run manifests, and the run config file.

All JSON is written canonically (sorted keys, two-space indent, trailing
newline) so that load followed by save is byte-identical. The run config file
is human-editable ``key = value`` text whose keys mirror the hyperparameter
names used in the run manifest.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import (
    RunConfig,
    Sys1Sample,
    ToolKind,
    ToolRequest,
    Trajectory,
    TrajectoryStatus,
    Turn,
)
from .errors import DecodeError, InvalidInput
from .rollout import RolloutResult

# -- canonical JSON helpers ---------------------------------------------------


def _dump(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def _read_json(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DecodeError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"corrupt record in {path}: {exc}", offset=exc.pos) from exc


# -- trajectory records ---------------------------------------------------------


def request_to_dict(request: ToolRequest | None) -> dict | None:
    if request is None:
        return None
    return {
        "kind": request.kind.value,
        "purpose": request.purpose,
        "queries": list(request.queries),
        "code": request.code,
    }


def request_from_dict(data: dict | None) -> ToolRequest | None:
    if data is None:
        return None
    return ToolRequest(
        kind=ToolKind(data["kind"]),
        purpose=data["purpose"],
        queries=tuple(data.get("queries") or ()),
        code=data.get("code"),
    )


def turn_to_dict(turn: Turn) -> dict:
    return {
        "reasoning": turn.reasoning,
        "request": request_to_dict(turn.request),
        "distilled": turn.distilled,
        "raw_output_count": turn.raw_output_count,
        "bin_count": turn.bin_count,
        "error": turn.error,
        "completion": turn.completion,
        "logprobs": list(turn.logprobs),
    }


def turn_from_dict(data: dict) -> Turn:
    return Turn(
        reasoning=data["reasoning"],
        request=request_from_dict(data.get("request")),
        distilled=data.get("distilled"),
        raw_output_count=data.get("raw_output_count", 0),
        bin_count=data.get("bin_count", 0),
        error=data.get("error"),
        completion=data.get("completion"),
        logprobs=tuple(data.get("logprobs") or ()),
    )


def trajectory_to_dict(trajectory: Trajectory) -> dict:
    return {
        "question": trajectory.question,
        "trajectory_id": trajectory.trajectory_id,
        "max_turns": trajectory.max_turns,
        "turns": [turn_to_dict(t) for t in trajectory.turns],
        "answer": trajectory.answer,
        "status": trajectory.status.value,
        "reward": trajectory.reward,
        "judged": trajectory.judged,
        "abort_reason": trajectory.abort_reason,
    }


def trajectory_from_dict(data: dict) -> Trajectory:
    try:
        return Trajectory(
            question=data["question"],
            trajectory_id=data["trajectory_id"],
            max_turns=data["max_turns"],
            turns=tuple(turn_from_dict(t) for t in data["turns"]),
            answer=data.get("answer"),
            status=TrajectoryStatus(data["status"]),
            reward=data.get("reward"),
            judged=data.get("judged"),
            abort_reason=data.get("abort_reason"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DecodeError(f"trajectory record is malformed: {exc}") from exc


def sample_to_dict(sample: Sys1Sample) -> dict:
    return {
        "trajectory_id": sample.trajectory_id,
        "turn_index": sample.turn_index,
        "bin_index": sample.bin_index,
        "packed_input": sample.packed_input,
        "output": sample.output,
        "logprobs": list(sample.logprobs),
        "ref_logprobs": list(sample.ref_logprobs) if sample.ref_logprobs is not None else None,
        "reward": sample.reward,
        "advantage": sample.advantage,
    }


def sample_from_dict(data: dict) -> Sys1Sample:
    ref = data.get("ref_logprobs")
    return Sys1Sample(
        trajectory_id=data["trajectory_id"],
        turn_index=data["turn_index"],
        bin_index=data["bin_index"],
        packed_input=data["packed_input"],
        output=data["output"],
        logprobs=tuple(data.get("logprobs") or ()),
        ref_logprobs=tuple(ref) if ref is not None else None,
        reward=data.get("reward"),
        advantage=data.get("advantage"),
    )


def save_trajectory(result: RolloutResult | Trajectory, path: str | Path) -> None:
    """Persist one trajectory (optionally with its distillation pairs)."""
    if isinstance(result, Trajectory):
        if any(turn.bin_count for turn in result.turns):
            raise InvalidInput(
                "trajectory has distillation turns; save the full rollout result"
            )
        record = {"trajectory": trajectory_to_dict(result), "sys1_samples": []}
    else:
        record = {
            "trajectory": trajectory_to_dict(result.trajectory),
            "sys1_samples": [sample_to_dict(s) for s in result.sys1_samples],
        }
    Path(path).write_text(_dump(record), encoding="utf-8")


def load_trajectory(path: str | Path) -> RolloutResult:
    """Load a stored trajectory record; corrupt files raise DecodeError."""
    data = _read_json(Path(path))
    try:
        trajectory = trajectory_from_dict(data["trajectory"])
        samples = tuple(sample_from_dict(s) for s in data.get("sys1_samples", []))
    except (KeyError, TypeError) as exc:
        raise DecodeError(f"trajectory record is malformed: {exc}") from exc
    return RolloutResult(trajectory=trajectory, sys1_samples=samples)


# -- run config ---------------------------------------------------------------

# Human-facing names for the core hyperparameters; the config file accepts
# these, their snake_case field names, and is written with the descriptive
# spellings so stored values are directly comparable to the documentation.
CONFIG_ALIASES: dict[str, str] = {
    "G": "group_size",
    "temperature": "temperature",
    "KL loss coefficient": "kl_coefficient",
    "entropy coefficient": "entropy_coefficient",
    "Learning Rate of Policy model": "learning_rate",
    "Batch size": "batch_size",
    "Maximum interaction turns": "max_turns",
    "Maximum Prompt Length of System 1": "sys1_max_prompt_tokens",
    "Maximum Response Length of System 1": "sys1_max_response_tokens",
    "Maximum Prompt Length of System 2": "sys2_max_prompt_tokens",
    "Maximum Response Length of System 2": "sys2_max_response_tokens",
}
_FIELD_TO_ALIAS = {v: k for k, v in CONFIG_ALIASES.items()}


def config_to_dict(config: RunConfig) -> dict:
    return dataclasses.asdict(config)


def config_from_dict(data: dict) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidInput(f"unknown config fields: {sorted(unknown)}")
    return RunConfig(**data)


def config_digest(config: RunConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _coerce(field_obj: dataclasses.Field, raw: str):
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if text.startswith('"'):  # JSON-escaped string (used for values with newlines)
        return json.loads(text)
    if field_obj.type in ("int", int):
        return int(text)
    if field_obj.type in ("float", float):
        return float(text)
    return text


def load_config_file(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    """Parse a ``key = value`` config file over the defaults (or ``base``)."""
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    values = config_to_dict(base or RunConfig())
    for lineno, raw_line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidInput(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        name = CONFIG_ALIASES.get(key, key)
        if name not in fields:
            raise InvalidInput(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[name] = _coerce(fields[name], value)
        except (ValueError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return RunConfig(**values)


def save_config_file(config: RunConfig, path: str | Path) -> None:
    """Write the config as editable key = value text."""
    lines = ["# run configuration"]
    for f in dataclasses.fields(RunConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        if isinstance(value, str) and (value != value.strip() or "\n" in value):
            value = json.dumps(value)
        key = _FIELD_TO_ALIAS.get(f.name, f.name)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- run manifest ---------------------------------------------------------------


@dataclass
class RunCounters:
    """Telemetry accumulated over one run; recomputable from the logs."""

    trajectories: int = 0
    answered: int = 0
    aborted: int = 0
    tool_calls: dict[str, int] = field(
        default_factory=lambda: {k.value: 0 for k in ToolKind}
    )
    bins: int = 0
    sys1_samples: int = 0
    batches: int = 0
    reward_total: float = 0.0
    response_count: int = 0
    response_tokens_total: int = 0
    response_tokens_min: int | None = None
    response_tokens_max: int | None = None

    def observe_response(self, tokens: int) -> None:
        self.response_count += 1
        self.response_tokens_total += tokens
        if self.response_tokens_min is None or tokens < self.response_tokens_min:
            self.response_tokens_min = tokens
        if self.response_tokens_max is None or tokens > self.response_tokens_max:
            self.response_tokens_max = tokens

    @property
    def response_tokens_mean(self) -> float:
        if not self.response_count:
            return 0.0
        return self.response_tokens_total / self.response_count

    def to_dict(self) -> dict:
        return {
            "trajectories": self.trajectories,
            "answered": self.answered,
            "aborted": self.aborted,
            "tool_calls": dict(sorted(self.tool_calls.items())),
            "bins": self.bins,
            "sys1_samples": self.sys1_samples,
            "batches": self.batches,
            "reward_total": self.reward_total,
            "response_count": self.response_count,
            "response_tokens_total": self.response_tokens_total,
            "response_tokens_min": self.response_tokens_min,
            "response_tokens_max": self.response_tokens_max,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunCounters":
        counters = cls()
        for key, value in data.items():
            setattr(counters, key, value)
        return counters


@dataclass(frozen=True)
class RunManifest:
    """Self-description of one run directory."""

    config: RunConfig
    seed: int
    template_digests: dict[str, str]
    providers: dict[str, str]
    backend: dict[str, str]
    started_at: str
    finished_at: str
    counters: RunCounters

    def to_dict(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "config_digest": config_digest(self.config),
            "seed": self.seed,
            "template_digests": dict(sorted(self.template_digests.items())),
            "providers": dict(sorted(self.providers.items())),
            "backend": dict(sorted(self.backend.items())),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "counters": self.counters.to_dict(),
        }


def write_manifest(manifest: RunManifest, path: str | Path) -> None:
    """Write the manifest; refuses to overwrite (one manifest per run)."""
    path = Path(path)
    if path.exists():
        raise InvalidInput(f"manifest already exists at {path}")
    path.write_text(_dump(manifest.to_dict()), encoding="utf-8")


def read_manifest(path: str | Path) -> RunManifest:
    data = _read_json(Path(path))
    try:
        return RunManifest(
            config=config_from_dict(data["config"]),
            seed=data["seed"],
            template_digests=data["template_digests"],
            providers=data["providers"],
            backend=data.get("backend", {}),
            started_at=data["started_at"],
            finished_at=data["finished_at"],
            counters=RunCounters.from_dict(data["counters"]),
        )
    except (KeyError, TypeError) as exc:
        raise DecodeError(f"manifest is malformed: {exc}") from exc


@dataclass(frozen=True)
class RunPaths:
    """Layout of a run directory."""

    root: Path

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.json"

    @property
    def trajectories(self) -> Path:
        return self.root / "trajectories"

    @property
    def batches(self) -> Path:
        return self.root / "batches"

    @property
    def tool_cache(self) -> Path:
        return self.root / "cache" / "tools"

    @property
    def inference_cache(self) -> Path:
        return self.root / "cache" / "inference"

    def create(self) -> "RunPaths":
        for directory in (self.root, self.trajectories, self.batches, self.tool_cache):
            directory.mkdir(parents=True, exist_ok=True)
        return self
