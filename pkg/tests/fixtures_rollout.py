"""Scripted rollout fixtures with hand-written expected traces.

Each fixture pins the exact loop behavior: turn count, final status, context
element order, and distillation pair count. The expected context lists were
written by hand from the loop's contract, not generated from the code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from dualsys.core import RunConfig, ToolKind, ToolRequest, whitespace_count
from dualsys.inference import ScriptedBackend
from dualsys.rollout import effective_sys1_capacity
from dualsys.toolbox import ExecutionResult, StaticProvider, StaticSandbox, Toolbox
from dualsys.toolbox.types import SearchHit

from conftest import words

QUESTION = "what is the melting point of X?"

SEARCH_CALL = (
    "<think>need info</think>"
    '<tool_call>{"name": "search", "arguments": {"queries": ["topic"]}, "purpose": "find topic"}</tool_call>'
)
PYTHON_CALL = (
    "<think>compute</think>"
    '<tool_call>{"name": "python", "arguments": {"code": "print(2+3)"}, "purpose": "add"}</tool_call>'
)

SEARCH_REQUEST = ToolRequest(kind=ToolKind.SEARCH, purpose="find topic", queries=("topic",))
PYTHON_REQUEST = ToolRequest(kind=ToolKind.PYTHON, purpose="add", code="print(2+3)")


def provider_with_docs(counts: Sequence[int]) -> StaticProvider:
    """A provider whose single query returns docs of the given word counts."""
    provider = StaticProvider()
    hits = []
    for i, count in enumerate(counts):
        url = f"https://docs.test/r{i}"
        hits.append(SearchHit(url=url, title=f"r{i}"))
        provider.pages[url] = (f"r{i}", words(count, prefix=f"r{i}-"))
    provider.search_results["topic"] = hits
    return provider


def sandbox_for_add() -> StaticSandbox:
    return StaticSandbox(
        results={
            "print(2+3)": ExecutionResult(stdout="5\n", stderr="", exit_status=0, wall_time=0.01)
        }
    )


def source_keyed_distiller(mapping: dict[str, str]) -> Callable:
    """Distiller script that answers according to the bin's source headers."""

    def reply(messages) -> str:
        user = messages[-1].content
        for needle, text in mapping.items():
            if f"[Source] {needle}" in user:
                return text
        return "(unknown bin)"

    return reply


def canonical_docs(counts: Sequence[int]):
    """ToolOutputs exactly as the fixture provider's fetches produce them."""
    from dualsys.core import ToolOutput

    return [
        ToolOutput(
            source=f"https://docs.test/r{i}",
            title=f"r{i}",
            content=words(c, prefix=f"r{i}-"),
            origin=ToolKind.SEARCH,
        )
        for i, c in enumerate(counts)
    ]


def config_with_capacity(
    outputs_counts: Sequence[int],
    capacity: int,
    *,
    purpose: str = "find topic",
    question: str = QUESTION,
    **overrides,
) -> RunConfig:
    """Shrink the distiller prompt budget so the content capacity is exact.

    The budget-to-capacity relation is affine, so probe with a huge budget
    and shift. Header accounting matches ``canonical_docs`` outputs.
    """
    probe_budget = 1_000_000
    outputs = canonical_docs(outputs_counts)
    probe = RunConfig(sys1_max_prompt_tokens=probe_budget, **overrides)
    effective = effective_sys1_capacity(outputs, purpose, question, probe, whitespace_count)
    overhead = probe_budget - effective
    return RunConfig(sys1_max_prompt_tokens=overhead + capacity, **overrides)


@dataclass
class RolloutFixture:
    name: str
    script: list[str]
    config: RunConfig
    expected_turns: int
    expected_status: str
    expected_pairs: int
    expected_answer: str | None
    expected_context: list  # strings, ToolRequests, or prefix matchers
    provider: StaticProvider = field(default_factory=StaticProvider)
    sandbox: StaticSandbox = field(default_factory=StaticSandbox)
    distiller: Callable | str | None = None

    def backend(self) -> ScriptedBackend:
        return ScriptedBackend(sys2_turns=self.script, sys1_reply=self.distiller)

    def toolbox(self) -> Toolbox:
        return Toolbox(
            provider=self.provider, sandbox=self.sandbox, page_fetcher=self.provider.fetch
        )


class Prefix:
    """Matches any string starting with the given prefix (for error text)."""

    def __init__(self, prefix: str):
        self.prefix = prefix

    def matches(self, value) -> bool:
        return isinstance(value, str) and value.startswith(self.prefix)

    def __repr__(self):
        return f"Prefix({self.prefix!r})"


def context_matches(expected: list, actual: list) -> bool:
    if len(expected) != len(actual):
        return False
    for want, got in zip(expected, actual):
        if isinstance(want, Prefix):
            if not want.matches(got):
                return False
        elif want != got:
            return False
    return True


def make_fixtures() -> list[RolloutFixture]:
    plain = RunConfig(sys2_max_prompt_tokens=100_000)
    fixtures = []

    fixtures.append(
        RolloutFixture(
            name="answer-first",
            script=["<think>easy</think><answer>42</answer>"],
            config=plain,
            expected_turns=1,
            expected_status="answered",
            expected_pairs=0,
            expected_answer="42",
            expected_context=[QUESTION, "easy"],
        )
    )

    single_tool_config = config_with_capacity(
        [9, 7, 5], 10, sys2_max_prompt_tokens=100_000, chunk_separator="|"
    )
    fixtures.append(
        RolloutFixture(
            name="single-tool",
            script=[SEARCH_CALL, "<think>got it</think><answer>result</answer>"],
            config=single_tool_config,
            provider=provider_with_docs([9, 7, 5]),
            distiller=source_keyed_distiller(
                {
                    "https://docs.test/r0": "alpha",
                    "https://docs.test/r1": "beta",
                    "https://docs.test/r2": "gamma",
                }
            ),
            expected_turns=2,
            expected_status="answered",
            # FFD by hand on counts [9, 7, 5] at capacity 10: 9 opens bin 1,
            # 7 cannot join (16 > 10) so bin 2, 5 cannot join either bin so
            # bin 3; three bins, one distillation each.
            expected_pairs=3,
            expected_answer="result",
            expected_context=[
                QUESTION,
                "need info",
                SEARCH_REQUEST,
                "find topic",
                "alpha|beta|gamma",
                "got it",
            ],
        )
    )

    multi_tool_config = config_with_capacity(
        [4, 3], 10, sys2_max_prompt_tokens=100_000, chunk_separator="|"
    )
    fixtures.append(
        RolloutFixture(
            name="multi-tool",
            script=[
                SEARCH_CALL,
                PYTHON_CALL,
                "<think>combine</think><answer>5</answer>",
            ],
            config=multi_tool_config,
            provider=provider_with_docs([4, 3]),
            sandbox=sandbox_for_add(),
            distiller="combined-notes",
            expected_turns=3,
            expected_status="answered",
            # counts [4, 3] at capacity 10 pack into one bin (4 + 3 = 7)
            expected_pairs=1,
            expected_answer="5",
            expected_context=[
                QUESTION,
                "need info",
                SEARCH_REQUEST,
                "find topic",
                "combined-notes",
                "compute",
                PYTHON_REQUEST,
                "add",
                "5\n",
                "combine",
            ],
        )
    )

    fixtures.append(
        RolloutFixture(
            name="python-bypass",
            script=[PYTHON_CALL, "<think>so</think><answer>5</answer>"],
            config=plain,
            sandbox=sandbox_for_add(),
            expected_turns=2,
            expected_status="answered",
            expected_pairs=0,
            expected_answer="5",
            expected_context=[
                QUESTION,
                "compute",
                PYTHON_REQUEST,
                "add",
                "5\n",
                "so",
            ],
        )
    )

    fixtures.append(
        RolloutFixture(
            name="malformed-tool-call",
            script=[
                "<think>hm</think><tool_call>{oops</tool_call>",
                "<think>retry</think><answer>fallback</answer>",
            ],
            config=plain,
            expected_turns=2,
            expected_status="answered",
            expected_pairs=0,
            expected_answer="fallback",
            expected_context=[
                QUESTION,
                "hm",
                Prefix("[tool call could not be parsed"),
                "retry",
            ],
        )
    )

    fixtures.append(
        RolloutFixture(
            name="never-answers",
            script=["<think>still thinking</think>"],
            config=plain,
            expected_turns=10,
            expected_status="max_turns_exceeded",
            expected_pairs=0,
            expected_answer=None,
            expected_context=[QUESTION] + ["still thinking"] * 10,
        )
    )

    fixtures.append(
        RolloutFixture(
            name="answer-beside-tool-call",
            script=[
                "<think>both</think>"
                '<tool_call>{"name": "search", "arguments": {"queries": ["x"]}, "purpose": "p"}</tool_call>'
                "<answer>done</answer>"
            ],
            config=plain,
            expected_turns=1,
            expected_status="answered",
            expected_pairs=0,
            expected_answer="done",
            expected_context=[QUESTION, "both"],
        )
    )

    return fixtures
