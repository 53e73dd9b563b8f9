"""Tag grammar parsing and prompt rendering."""

import pytest
from hypothesis import given, strategies as st

from dualsys.core import ToolKind, ToolRequest, Turn, append_turn, new_trajectory
from dualsys.errors import (
    AmbiguousStep,
    DualsysError,
    InconsistentSpec,
    InvalidInput,
    MalformedTags,
    MalformedToolCall,
)
from dualsys.protocol import (
    ParsedStep,
    default_tool_specs,
    extract_answer,
    parse_system2_output,
    render_step,
    render_system1_messages,
    render_system2_messages,
)
from dualsys.templates import DISTILLER_SYSTEM

from conftest import doc


class TestParse:
    def test_search_call(self):
        text = '<think>search it</think><tool_call>{name: search, queries: ["x"], purpose: "find x"}</tool_call>'
        step = parse_system2_output(text)
        assert step.reasoning == "search it"
        assert step.tool_request is not None
        assert step.tool_request.kind is ToolKind.SEARCH
        assert step.tool_request.queries == ("x",)
        assert step.tool_request.purpose == "find x"
        assert step.answer is None

    def test_answer_step(self):
        step = parse_system2_output("<think>done</think><answer>42</answer>")
        assert step.answer == "42"
        assert step.tool_request is None

    def test_nested_tags_rejected(self):
        with pytest.raises(MalformedTags):
            parse_system2_output("<think><answer>bad</answer></think>")

    def test_unclosed_tag_rejected(self):
        with pytest.raises(MalformedTags):
            parse_system2_output("<think>never closed")

    def test_stray_close_rejected(self):
        with pytest.raises(MalformedTags):
            parse_system2_output("loose </answer> tag")

    def test_canonical_json_payload(self):
        text = (
            "<think>compute</think>"
            '<tool_call>{"name": "python", "arguments": {"code": "print(2+3)"}, "purpose": "add"}</tool_call>'
        )
        step = parse_system2_output(text)
        assert step.tool_request.kind is ToolKind.PYTHON
        assert step.tool_request.code == "print(2+3)"

    def test_multiple_think_blocks_join(self):
        step = parse_system2_output("<think>a</think><think>b</think><answer>c</answer>")
        assert step.reasoning == "a\nb"

    def test_missing_purpose_is_malformed(self):
        text = '<tool_call>{"name": "search", "arguments": {"queries": ["x"]}}</tool_call>'
        with pytest.raises(MalformedToolCall):
            parse_system2_output(text)

    def test_unparseable_payload_is_malformed(self):
        with pytest.raises(MalformedToolCall):
            parse_system2_output("<tool_call>{{{</tool_call>")

    def test_unknown_tool_is_malformed(self):
        with pytest.raises(MalformedToolCall):
            parse_system2_output('<tool_call>{"name": "wolfram", "purpose": "p"}</tool_call>')

    def test_two_tool_calls_is_malformed(self):
        text = (
            '<tool_call>{"name": "search", "arguments": {"queries": ["a"]}, "purpose": "p"}</tool_call>'
            '<tool_call>{"name": "search", "arguments": {"queries": ["b"]}, "purpose": "p"}</tool_call>'
        )
        with pytest.raises(MalformedToolCall):
            parse_system2_output(text)

    def test_malformed_call_carries_reasoning(self):
        with pytest.raises(MalformedToolCall) as excinfo:
            parse_system2_output("<think>hm</think><tool_call>nope</tool_call>")
        assert excinfo.value.reasoning == "hm"

    def test_answer_and_tool_call_is_ambiguous(self):
        text = (
            "<think>both</think>"
            '<tool_call>{"name": "search", "arguments": {"queries": ["x"]}, "purpose": "p"}</tool_call>'
            "<answer>done</answer>"
        )
        with pytest.raises(AmbiguousStep) as excinfo:
            parse_system2_output(text)
        assert excinfo.value.answer == "done"
        assert excinfo.value.reasoning == "both"

    def test_text_outside_tags_is_ignored(self):
        step = parse_system2_output("noise <think>a</think> trailing noise")
        assert step == ParsedStep(reasoning="a")

    @given(st.text(max_size=400))
    def test_never_panics(self, text):
        try:
            step = parse_system2_output(text)
        except DualsysError:
            return
        assert isinstance(step, ParsedStep)


_payload_text = st.text(
    alphabet=st.characters(blacklist_characters="<>\\\"", blacklist_categories=("Cs",)),
    min_size=1,
    max_size=60,
)


class TestRoundTrip:
    @given(
        reasoning=_payload_text,
        queries=st.lists(_payload_text.filter(lambda s: s.strip()), min_size=1, max_size=3),
        purpose=_payload_text.filter(lambda s: s.strip()),
    )
    def test_search_steps_round_trip(self, reasoning, queries, purpose):
        step = ParsedStep(
            reasoning=reasoning,
            tool_request=ToolRequest(
                kind=ToolKind.SEARCH, purpose=purpose, queries=tuple(queries)
            ),
        )
        assert parse_system2_output(render_step(step)) == step

    @given(reasoning=_payload_text, answer=_payload_text.map(str.strip).filter(bool))
    def test_answer_steps_round_trip(self, reasoning, answer):
        step = ParsedStep(reasoning=reasoning, answer=answer)
        assert parse_system2_output(render_step(step)) == step

    def test_python_step_round_trips(self):
        step = ParsedStep(
            reasoning="r",
            tool_request=ToolRequest(kind=ToolKind.PYTHON, purpose="p", code="print(1)\n"),
        )
        assert parse_system2_output(render_step(step)) == step


class TestExtractAnswer:
    def test_trims_whitespace(self):
        assert extract_answer("<answer> Paris </answer>") == "Paris"

    def test_absent(self):
        assert extract_answer("no tags here") is None

    def test_last_block_wins(self):
        text = "<answer>first</answer> rethinking <answer>second</answer>"
        # oracle: a manual scan of the fixture finds the final block's content
        assert extract_answer(text) == "second"

    def test_multiline_answer(self):
        assert extract_answer("<answer>line1\nline2</answer>") == "line1\nline2"


class TestRenderSystem2:
    def test_fresh_trajectory_is_two_messages(self):
        messages = render_system2_messages(new_trajectory("q"), default_tool_specs())
        assert [m.role for m in messages] == ["system", "user"]
        assert messages[1].content == "q"
        for spec in default_tool_specs():
            assert spec.name in messages[0].content

    def test_tool_turn_adds_assistant_and_tool_messages(self):
        request = ToolRequest(kind=ToolKind.SEARCH, purpose="p", queries=("x",))
        trajectory = append_turn(
            new_trajectory("q"),
            Turn(reasoning="s", request=request, distilled="the distilled text", bin_count=1),
        )
        messages = render_system2_messages(trajectory, default_tool_specs())
        assert [m.role for m in messages] == ["system", "user", "assistant", "tool"]
        assert "<tool_call>" in messages[2].content
        assert messages[3].content == "the distilled text"

    def test_verbatim_completion_wins_over_canonical_rendering(self):
        trajectory = append_turn(
            new_trajectory("q"),
            Turn(reasoning="s", completion="<think>s</think>  \n"),
        )
        messages = render_system2_messages(trajectory, default_tool_specs())
        assert messages[2].content == "<think>s</think>  \n"

    def test_deterministic(self):
        request = ToolRequest(kind=ToolKind.SCHOLAR, purpose="p", queries=("a", "b"))
        trajectory = append_turn(
            new_trajectory("q"), Turn(reasoning="s", request=request, distilled="d", bin_count=2)
        )
        first = render_system2_messages(trajectory, default_tool_specs())
        second = render_system2_messages(trajectory, default_tool_specs())
        assert first == second

    def test_missing_tool_spec_is_inconsistent(self):
        request = ToolRequest(kind=ToolKind.SEARCH, purpose="p", queries=("x",))
        trajectory = append_turn(
            new_trajectory("q"), Turn(reasoning="s", request=request, distilled="d")
        )
        with pytest.raises(InconsistentSpec):
            render_system2_messages(trajectory, ())

    def test_error_turn_renders_observation(self):
        trajectory = append_turn(
            new_trajectory("q"),
            Turn(error="[tool call could not be parsed]", completion="<tool_call>junk"),
        )
        messages = render_system2_messages(trajectory, default_tool_specs())
        assert messages[3].role == "tool"
        assert messages[3].content == "[tool call could not be parsed]"


class TestRenderSystem1:
    def test_structure(self):
        outputs = [doc(3, "a"), doc(2, "b")]
        messages = render_system1_messages(outputs, "extract dates", "when?")
        assert messages[0].content == DISTILLER_SYSTEM
        user = messages[1].content
        assert "[Source] a" in user and "[Source] b" in user
        assert user.index("[Source] a") < user.index("[Source] b")
        assert "# Tool Call Purpose: extract dates" in user
        assert "# User Question: when?" in user
        assert user.index("[Source] b") < user.index("# Tool Call Purpose")
        assert user.index("# Tool Call Purpose") < user.index("# User Question")

    def test_truncated_output_gets_marker(self):
        from dataclasses import replace

        output = replace(doc(5, "big"), truncated=True)
        user = render_system1_messages([output], "p", "q")[1].content
        assert "[content truncated]" in user

    def test_empty_bin_rejected(self):
        with pytest.raises(InvalidInput):
            render_system1_messages([], "p", "q")

    def test_deterministic(self):
        outputs = [doc(4, "x")]
        assert render_system1_messages(outputs, "p", "q") == render_system1_messages(
            outputs, "p", "q"
        )
