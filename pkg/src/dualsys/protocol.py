"""Tagged-output grammar and prompt rendering.

The researcher role emits ``<think>``, ``<tool_call>`` and ``<answer>`` blocks
(case-sensitive, never nested). This module parses that grammar into typed
steps and renders the chat prompts for both roles. Everything here is pure.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .core import Message, ToolKind, ToolOutput, ToolRequest
from .errors import (
    AmbiguousStep,
    InconsistentSpec,
    InvalidInput,
    MalformedTags,
    MalformedToolCall,
)
from .templates import DISTILLER_SYSTEM, DISTILLER_USER, RESEARCHER_SYSTEM

TAG_NAMES = ("think", "tool_call", "answer")
_TAG_RE = re.compile(r"</?(?:think|tool_call|answer)>")
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)

# Accepted spellings for tool names in payloads. Canonical names are the enum
# values; the aliases absorb common model phrasings.
_KIND_ALIASES = {
    "search": ToolKind.SEARCH,
    "google_search": ToolKind.SEARCH,
    "web_search": ToolKind.SEARCH,
    "scholar": ToolKind.SCHOLAR,
    "google_scholar": ToolKind.SCHOLAR,
    "python": ToolKind.PYTHON,
    "python_interpreter": ToolKind.PYTHON,
}

TRUNCATION_MARKER = "[content truncated]"


@dataclass(frozen=True)
class ParsedStep:
    """One parsed researcher step: reasoning plus at most one action."""

    reasoning: str = ""
    tool_request: ToolRequest | None = None
    answer: str | None = None


@dataclass(frozen=True)
class ToolSpec:
    """Description of one tool as advertised in the researcher prompt."""

    name: str
    description: str
    parameters: str


def default_tool_specs() -> tuple[ToolSpec, ...]:
    """Specs for the three built-in tools, including the payload schema."""
    return (
        ToolSpec(
            name="search",
            description="Web search. Returns the extracted text of up to 10 result pages per query.",
            parameters='{"name": "search", "arguments": {"queries": ["<query>", ...]}, "purpose": "<why you need this>"}',
        ),
        ToolSpec(
            name="scholar",
            description="Academic search. Returns up to 5 papers per query with the text the provider supplies.",
            parameters='{"name": "scholar", "arguments": {"queries": ["<query>", ...]}, "purpose": "<why you need this>"}',
        ),
        ToolSpec(
            name="python",
            description="Runs Python code in a sandbox and returns stdout (plus stderr if any).",
            parameters='{"name": "python", "arguments": {"code": "<source>"}, "purpose": "<why you need this>"}',
        ),
    )


def _scan_blocks(text: str) -> list[tuple[str, str]]:
    """Split ``text`` into (tag, content) blocks; reject nesting and overlap."""
    blocks: list[tuple[str, str]] = []
    open_tag: str | None = None
    open_end = 0
    for match in _TAG_RE.finditer(text):
        tag = match.group(0)
        closing = tag.startswith("</")
        name = tag[2:-1] if closing else tag[1:-1]
        if open_tag is None:
            if closing:
                raise MalformedTags(f"closing </{name}> without a matching opening tag")
            open_tag = name
            open_end = match.end()
        else:
            if not closing or name != open_tag:
                raise MalformedTags(f"<{name}> inside an open <{open_tag}> block")
            blocks.append((open_tag, text[open_end : match.start()]))
            open_tag = None
    if open_tag is not None:
        raise MalformedTags(f"<{open_tag}> block is never closed")
    return blocks


def _tolerant_json(payload: str) -> dict:
    """Parse a payload object, forgiving unquoted keys and bare-word values."""
    try:
        value = json.loads(payload)
    except json.JSONDecodeError:
        patched = re.sub(r'([{,]\s*)([A-Za-z_][A-Za-z0-9_]*)\s*:', r'\1"\2":', payload)
        patched = re.sub(
            r':\s*([A-Za-z_][A-Za-z0-9_./-]*)\s*([,}\]])',
            lambda m: f': "{m.group(1)}"{m.group(2)}'
            if m.group(1) not in ("true", "false", "null")
            else m.group(0),
            patched,
        )
        try:
            value = json.loads(patched)
        except json.JSONDecodeError as exc:
            raise MalformedToolCall(f"tool_call payload is not parseable: {exc}") from exc
    if not isinstance(value, dict):
        raise MalformedToolCall("tool_call payload must be a JSON object")
    return value


def _request_from_payload(payload: dict) -> ToolRequest:
    name = payload.get("name")
    if not isinstance(name, str) or name.lower() not in _KIND_ALIASES:
        raise MalformedToolCall(f"unknown tool name {name!r}")
    kind = _KIND_ALIASES[name.lower()]

    arguments = payload.get("arguments")
    if not isinstance(arguments, dict):
        arguments = payload  # tolerate flattened payloads

    purpose = payload.get("purpose") or arguments.get("purpose")
    if not isinstance(purpose, str) or not purpose.strip():
        raise MalformedToolCall("tool_call payload is missing a purpose")

    try:
        if kind is ToolKind.PYTHON:
            code = arguments.get("code")
            if not isinstance(code, str) or not code:
                raise MalformedToolCall("python tool_call is missing code")
            return ToolRequest(kind=kind, purpose=purpose, code=code)
        queries = arguments.get("queries")
        if isinstance(queries, str):
            queries = [queries]
        if not isinstance(queries, list) or not queries or not all(isinstance(q, str) and q for q in queries):
            raise MalformedToolCall(f"{kind.value} tool_call needs a non-empty queries list")
        return ToolRequest(kind=kind, purpose=purpose, queries=tuple(queries))
    except InvalidInput as exc:
        raise MalformedToolCall(str(exc)) from exc


def parse_system2_output(text: str) -> ParsedStep:
    """Parse arbitrary researcher output into a step.

    Raises ``MalformedTags`` on tag-structure violations, ``MalformedToolCall``
    when a tool_call block exists but yields no request, and ``AmbiguousStep``
    when both a tool call and an answer are present (the exception carries the
    parsed pieces so callers can resolve the conflict). With multiple answer
    blocks the last one wins, matching ``extract_answer``.
    """
    blocks = _scan_blocks(text)
    reasoning = "\n".join(content for tag, content in blocks if tag == "think")
    tool_payloads = [content for tag, content in blocks if tag == "tool_call"]
    answers = [content for tag, content in blocks if tag == "answer"]
    answer = answers[-1].strip() if answers else None

    if len(tool_payloads) > 1:
        raise MalformedToolCall("more than one tool_call block", reasoning=reasoning)

    request: ToolRequest | None = None
    if tool_payloads:
        try:
            request = _request_from_payload(_tolerant_json(tool_payloads[0].strip()))
        except MalformedToolCall as exc:
            exc.reasoning = reasoning
            raise

    if request is not None and answer is not None:
        raise AmbiguousStep(
            "step contains both a tool_call and an answer",
            reasoning=reasoning,
            answer=answer,
        )
    return ParsedStep(reasoning=reasoning, tool_request=request, answer=answer)


def render_step(step: ParsedStep) -> str:
    """Canonical tagged serialization of a step; inverse of the parser."""
    parts: list[str] = []
    if step.reasoning:
        parts.append(f"<think>{step.reasoning}</think>")
    if step.tool_request is not None:
        req = step.tool_request
        payload: dict = {"name": req.kind.value, "purpose": req.purpose}
        if req.kind is ToolKind.PYTHON:
            payload["arguments"] = {"code": req.code}
        else:
            payload["arguments"] = {"queries": list(req.queries)}
        parts.append(f"<tool_call>{json.dumps(payload, sort_keys=True)}</tool_call>")
    if step.answer is not None:
        parts.append(f"<answer>{step.answer}</answer>")
    return "".join(parts)


def extract_answer(text: str) -> str | None:
    """Content of the last well-formed answer block, trimmed; None if absent."""
    matches = _ANSWER_RE.findall(text)
    if not matches:
        return None
    return matches[-1].strip()


def render_tool_descriptions(tool_specs: tuple[ToolSpec, ...] | list[ToolSpec]) -> str:
    lines = ["You have access to the following tools:", ""]
    for spec in tool_specs:
        lines.append(f"- {spec.name}: {spec.description}")
        lines.append(f"  Call format: {spec.parameters}")
    return "\n".join(lines)


def render_system2_messages(
    trajectory,
    tool_specs: tuple[ToolSpec, ...] | list[ToolSpec] = (),
) -> list[Message]:
    """Chat messages for the next researcher generation.

    History replays each prior turn verbatim: the generated text as an
    assistant message, followed by a tool message carrying the distilled text
    (or the injected error observation). Deterministic for equal inputs.
    """
    known = {spec.name for spec in tool_specs}
    if len(known) != len(list(tool_specs)):
        raise InconsistentSpec("tool spec names must be unique")
    for turn in trajectory.turns:
        if turn.request is not None and turn.request.kind.value not in known:
            raise InconsistentSpec(
                f"turn uses tool {turn.request.kind.value!r} but no spec describes it"
            )

    system = RESEARCHER_SYSTEM.format(tool_descriptions=render_tool_descriptions(tool_specs))
    messages = [Message("system", system), Message("user", trajectory.question)]
    for turn in trajectory.turns:
        if turn.completion is not None:
            assistant_text = turn.completion
        else:
            assistant_text = render_step(
                ParsedStep(reasoning=turn.reasoning, tool_request=turn.request)
            )
        messages.append(Message("assistant", assistant_text))
        if turn.request is not None:
            messages.append(Message("tool", turn.distilled or ""))
        elif turn.error is not None:
            messages.append(Message("tool", turn.error))
    return messages


def render_output_block(output: ToolOutput) -> str:
    """One serialized tool output: source/title headers plus content."""
    lines = [f"[Source] {output.source}"]
    if output.title:
        lines.append(f"[Title] {output.title}")
    content = output.content
    if output.truncated:
        content = f"{content}\n{TRUNCATION_MARKER}" if content else TRUNCATION_MARKER
    lines.append(content)
    return "\n".join(lines)


def render_system1_messages(
    bin_contents: list[ToolOutput] | tuple[ToolOutput, ...],
    purpose: str,
    question: str,
) -> list[Message]:
    """Chat messages for one distillation call over a packed bin."""
    if not bin_contents:
        raise InvalidInput("a distillation call needs at least one tool output")
    serialized = "\n\n".join(render_output_block(o) for o in bin_contents)
    user = DISTILLER_USER.format(tool_outputs=serialized, purpose=purpose, question=question)
    return [Message("system", DISTILLER_SYSTEM), Message("user", user)]
