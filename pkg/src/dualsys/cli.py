"""Command-line surface tying the modules into runnable workflows."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .core import RunConfig, ToolOutput, ToolKind, WhitespaceTokenizer
from .errors import DualsysError, NoTrainableTokens
from .binpack import pack
from .grpo import SampleLoss, policy_loss, read_batch_records, total_loss
from .inference import CachingBackend, HttpChatBackend, ScriptedBackend
from .judge import score
from .pipeline import (
    QuestionSpec,
    recompute_counters,
    run_batch_job,
    stats_lines,
)
from .rollout import run_trajectory
from .store import (
    RunPaths,
    load_config_file,
    load_trajectory,
    read_manifest,
)
from .toolbox import (
    HttpSandbox,
    ReplayMode,
    SerpApiProvider,
    load_static_tools,
    with_replay,
)


def _load_config(args) -> RunConfig:
    config = load_config_file(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        config = RunConfig(**{**_config_dict(config), "rng_seed": args.seed})
    if getattr(args, "group_size", None) is not None:
        config = RunConfig(**{**_config_dict(config), "group_size": args.group_size})
    return config


def _config_dict(config: RunConfig) -> dict:
    return dataclasses.asdict(config)


def _build_backend(args, config: RunConfig, tokenizer):
    if args.mock_script:
        backend = ScriptedBackend.from_file(args.mock_script, tokenizer=tokenizer)
        desc = {"kind": "scripted", "script": str(Path(args.mock_script).resolve())}
        return backend, backend, desc
    if not config.inference_url or not config.inference_model:
        raise DualsysError(
            "no inference endpoint configured; set inference_url / inference_model "
            "in the config file or pass --mock-script"
        )
    backend = HttpChatBackend(config.inference_url, config.inference_model)
    judge_url = config.judge_url or config.inference_url
    judge_model = config.judge_model or config.inference_model
    judge_backend = HttpChatBackend(judge_url, judge_model)
    desc = {"kind": "http", "url": config.inference_url, "model": config.inference_model}
    return backend, judge_backend, desc


def _build_tools(args, config: RunConfig, record_store: Path | None = None):
    """Assemble the tool backend from the CLI's tool flags."""
    provider = None
    sandbox = None
    fetcher = None
    desc: dict[str, str] = {}
    if args.static_tools:
        provider, sandbox = load_static_tools(args.static_tools)
        fetcher = provider.fetch
        desc["tools"] = f"static:{Path(args.static_tools).resolve()}"
    elif args.tool_mode != "replay":
        provider = SerpApiProvider(endpoint=config.search_url or "https://serpapi.com/search")
        desc["tools"] = "serpapi"
        if config.sandbox_url:
            sandbox = HttpSandbox(config.sandbox_url)

    mode = ReplayMode(args.tool_mode)
    store_path = args.tool_store
    if record_store is not None and mode is ReplayMode.LIVE:
        # runs always record their tool traffic so they can be replayed
        mode = ReplayMode.RECORD
        store_path = store_path or str(record_store)
    if mode is not ReplayMode.LIVE and not store_path:
        store_path = str(record_store) if record_store else None
    tools = with_replay(mode, store_path, provider=provider, sandbox=sandbox, page_fetcher=fetcher)
    desc["tool_mode"] = mode.value
    return tools, desc


def _read_questions(path: str) -> list[QuestionSpec]:
    specs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        specs.append(QuestionSpec(question=record["question"], gold_answer=record["answer"]))
    return specs


# -- subcommands ----------------------------------------------------------------


def _cmd_rollout(args) -> int:
    tokenizer = WhitespaceTokenizer()
    config = _load_config(args)
    backend, _, _ = _build_backend(args, config, tokenizer)
    tools, _ = _build_tools(args, config)
    result = run_trajectory(
        args.question, backend, tools, config, tokenizer=tokenizer, seed=config.rng_seed
    )
    trajectory = result.trajectory
    print(f"trajectory: {trajectory.trajectory_id}")
    print(f"status:     {trajectory.status.value}")
    print(f"turns:      {len(trajectory.turns)}")
    print(f"sys1 pairs: {len(result.sys1_samples)}")
    for i, turn in enumerate(trajectory.turns):
        kind = turn.request.kind.value if turn.request else ("error" if turn.error else "reason")
        print(f"  turn {i}: {kind} (bins={turn.bin_count}, outputs={turn.raw_output_count})")
    print(f"answer:     {trajectory.answer!r}")
    if args.save:
        from .store import save_trajectory

        save_trajectory(result, args.save)
        print(f"saved to {args.save}")
    return 0


def _cmd_group(args) -> int:
    tokenizer = WhitespaceTokenizer()
    config = _load_config(args)
    questions = _read_questions(args.question_file)
    paths = RunPaths(Path(args.out)).create()
    backend, judge_backend, backend_desc = _build_backend(args, config, tokenizer)
    tools, tool_desc = _build_tools(args, config, record_store=paths.tool_cache)
    if backend_desc.get("kind") == "http":
        paths.inference_cache.mkdir(parents=True, exist_ok=True)
        backend = CachingBackend(backend, paths.inference_cache)
        judge_backend = CachingBackend(judge_backend, paths.inference_cache)

    manifest = run_batch_job(
        questions,
        paths.root,
        backend=backend,
        judge_backend=judge_backend,
        tools=tools,
        config=config,
        tokenizer=tokenizer,
        backend_desc=backend_desc,
        provider_desc=tool_desc,
    )
    print(f"run directory: {paths.root}")
    for line in stats_lines(manifest.counters):
        print(line)
    for batch_file in sorted(paths.batches.glob("*.jsonl")):
        loss = _batch_on_policy_loss(batch_file, config)
        suffix = f" (on-policy L_total {loss:+.4f})" if loss is not None else ""
        print(f"batch: {batch_file.name}{suffix}")
    return 0


def _batch_on_policy_loss(batch_file: Path, config: RunConfig) -> float | None:
    """Freshly collected data: ratio 1 everywhere, so kl is 0 and loss -A."""
    _, records = read_batch_records(batch_file)
    sides: dict[str, list[SampleLoss]] = {"sys2": [], "sys1": []}
    for record in records:
        logprobs = record["logprobs"]
        if not logprobs:
            continue
        loss = policy_loss(
            logprobs, logprobs, record["advantage"], [True] * len(logprobs), config.clip_epsilon
        )
        sides[record["sample_kind"]].append(SampleLoss(policy=loss))
    try:
        return total_loss(sides["sys2"], sides["sys1"], config.kl_coefficient)
    except (DualsysError, NoTrainableTokens):
        return None


def _cmd_pack(args) -> int:
    counter = WhitespaceTokenizer().count
    files: list[Path] = []
    if args.dir:
        files.extend(sorted(Path(args.dir).glob("*.txt")))
    files.extend(Path(f) for f in args.files)
    if not files:
        print("pack: no input files", file=sys.stderr)
        return 2
    outputs = [
        ToolOutput(
            source=str(path), title=path.name,
            content=path.read_text(encoding="utf-8"), origin=ToolKind.SEARCH,
        )
        for path in files
    ]
    bins = pack(outputs, args.capacity, counter)
    layout = [[counter(item.content) for item in b.items] for b in bins]
    print(f"capacity {args.capacity}: {len(bins)} bins {layout}")
    for i, b in enumerate(bins):
        flag = " (truncated)" if b.truncated else ""
        names = ", ".join(item.title for item in b.items)
        print(f"  bin {i}: {b.total_tokens} tokens{flag}: {names}")
    return 0


def _cmd_judge(args) -> int:
    tokenizer = WhitespaceTokenizer()
    config = _load_config(args)
    _, judge_backend, _ = _build_backend(args, config, tokenizer)
    result = load_trajectory(args.trajectory)
    outcome = score(result.trajectory, args.gold, judge_backend, config)
    print(f"reward: {outcome.reward:g} (judged={outcome.judged})")
    return 0


def _cmd_curate(args) -> int:
    from .curation import CandidateQA, run_pipeline

    tokenizer = WhitespaceTokenizer()
    config = _load_config(args)
    backend, judge_backend, _ = _build_backend(args, config, tokenizer)
    tools, _ = _build_tools(args, config)
    candidates = []
    for line in Path(args.input).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        candidates.append(
            CandidateQA(
                prompt=record["question"],
                gold_answer=record["answer"],
                subject=record.get("subject", ""),
                provenance=record.get("provenance", ""),
            )
        )

    def attempt(qa: CandidateQA) -> int:
        result = run_trajectory(
            qa.prompt, backend, tools, config, tokenizer=tokenizer, seed=config.rng_seed
        )
        outcome = score(result.trajectory, qa.gold_answer, judge_backend, config)
        return int(outcome.reward)

    survivors, report = run_pipeline(
        candidates,
        judge_backend=judge_backend,
        rollout_fn=attempt,
        config=config,
        n_attempts=args.bon_attempts,
    )
    for line in report.as_lines():
        print(line)
    out = Path(args.out)
    report.save(out.with_suffix(out.suffix + ".report.json"))
    out.write_text(
        "".join(
            json.dumps(
                {
                    "question": c.prompt,
                    "answer": c.gold_answer,
                    "subject": c.subject,
                    "provenance": c.provenance,
                    "bon_correct_count": c.bon_correct_count,
                }
            )
            + "\n"
            for c in survivors
        ),
        encoding="utf-8",
    )
    print(f"kept {len(survivors)} of {len(candidates)} -> {out}")
    return 0


def _cmd_replay(args) -> int:
    source = RunPaths(Path(args.run_dir))
    manifest = read_manifest(source.manifest)
    config = manifest.config
    tokenizer = WhitespaceTokenizer()

    if manifest.backend.get("kind") == "scripted":
        backend = ScriptedBackend.from_file(manifest.backend["script"], tokenizer=tokenizer)
        judge_backend = backend
    else:
        backend = CachingBackend(None, source.inference_cache, replay_only=True)
        judge_backend = backend
    tools = with_replay(ReplayMode.REPLAY, source.tool_cache)
    questions = _read_questions(source.root / "questions.jsonl")

    out_dir = Path(args.out) if args.out else Path(str(source.root) + "-replay")
    run_batch_job(
        questions,
        out_dir,
        backend=backend,
        judge_backend=judge_backend,
        tools=tools,
        config=config,
        tokenizer=tokenizer,
        backend_desc=manifest.backend,
        provider_desc=manifest.providers,
    )

    mismatches = 0
    for original in sorted(source.batches.glob("*.jsonl")):
        replayed = RunPaths(out_dir).batches / original.name
        if not replayed.exists() or replayed.read_bytes() != original.read_bytes():
            mismatches += 1
            print(f"MISMATCH: {original.name}")
        else:
            print(f"match: {original.name}")
    if mismatches:
        print(f"replay diverged on {mismatches} batch file(s)", file=sys.stderr)
        return 1
    print(f"replay reproduced {source.root} byte-identically -> {out_dir}")
    return 0


def _cmd_stats(args) -> int:
    paths = RunPaths(Path(args.run_dir))
    manifest = read_manifest(paths.manifest)
    recomputed = recompute_counters(paths.root)
    print("manifest counters:")
    for line in stats_lines(manifest.counters):
        print(f"  {line}")
    consistent = recomputed.to_dict() == manifest.counters.to_dict()
    print(f"recomputed from logs: {'consistent' if consistent else 'INCONSISTENT'}")
    if not consistent:
        print("recomputed counters:")
        for line in stats_lines(recomputed):
            print(f"  {line}")
        return 1
    return 0


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--mock-script", help="scripted backend JSON file (offline mode)")
    parser.add_argument(
        "--tool-mode", choices=["live", "record", "replay"], default="live",
        help="tool execution mode",
    )
    parser.add_argument("--tool-store", help="record/replay store directory")
    parser.add_argument("--static-tools", help="static tool fixture JSON file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualsys",
        description="Dual-role research rollouts and GRPO-ready training batches.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rollout", help="run one question and print the trajectory")
    p.add_argument("--question", required=True)
    p.add_argument("--save", help="write the trajectory record here")
    _add_backend_flags(p)
    p.set_defaults(fn=_cmd_rollout)

    p = sub.add_parser("group", help="question file -> judged groups -> batch files")
    p.add_argument("--question-file", required=True, help="JSONL with question/answer fields")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--g", dest="group_size", type=int, help="group size override")
    _add_backend_flags(p)
    p.set_defaults(fn=_cmd_group)

    p = sub.add_parser("pack", help="debug: run the bin packer over text files")
    p.add_argument("--capacity", type=int, required=True)
    p.add_argument("--dir", help="directory of .txt files")
    p.add_argument("files", nargs="*", help="explicit files")
    p.set_defaults(fn=_cmd_pack)

    p = sub.add_parser("judge", help="score a stored trajectory against a gold answer")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--gold", required=True)
    _add_backend_flags(p)
    p.set_defaults(fn=_cmd_judge)

    p = sub.add_parser("curate", help="run the question filtering pipeline")
    p.add_argument("--input", required=True, help="JSONL with question/answer fields")
    p.add_argument("--out", required=True, help="output JSONL of survivors")
    p.add_argument("--bon-attempts", type=int, default=16)
    _add_backend_flags(p)
    p.set_defaults(fn=_cmd_curate)

    p = sub.add_parser("replay", help="re-execute a stored run deterministically")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", help="directory for the replayed run")
    p.set_defaults(fn=_cmd_replay)

    p = sub.add_parser("stats", help="telemetry tables from a run directory")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(fn=_cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except DualsysError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
