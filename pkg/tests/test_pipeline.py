"""Group workflow: judging, advantage propagation, balancing, batch shape."""

import math

from dualsys.core import RunConfig, TrajectoryStatus
from dualsys.inference import ScriptedBackend
from dualsys.pipeline import build_group_batch, question_id
from dualsys.toolbox import Toolbox

from fixtures_rollout import QUESTION, config_with_capacity, provider_with_docs

SEARCH_CALL = (
    "<think>look</think>"
    '<tool_call>{"name": "search", "arguments": {"queries": ["topic"]}, "purpose": "find topic"}</tool_call>'
)


class SeedSplitBackend(ScriptedBackend):
    """Researcher whose final answer depends on the generation seed's parity.

    Produces mixed rewards inside one group, which a pure scripted backend
    cannot (all members would answer identically).
    """

    def complete(self, messages, *, temperature=1.0, max_tokens=1024, seed=None):
        is_researcher = not (
            len(messages) == 1 and messages[0].role == "user"
        ) and messages[0].role == "system" and "researcher" in messages[0].content.lower()
        if is_researcher:
            index = sum(1 for m in messages if m.role == "assistant")
            if index == 0:
                return self._completion(SEARCH_CALL)
            answer = "right" if (seed or 0) % 2 == 0 else "wrong"
            return self._completion(f"<think>so</think><answer>{answer}</answer>")
        return super().complete(
            messages, temperature=temperature, max_tokens=max_tokens, seed=seed
        )


def judge_by_response(messages):
    return "correct: yes" if "[response]: right" in messages[0].content else "correct: no"


def mixed_group_artifacts(group_size=4):
    backend = SeedSplitBackend(
        sys1_reply="notes", judge_reply=judge_by_response
    )
    provider = provider_with_docs([4, 3])
    config = config_with_capacity([4, 3], 10, sys2_max_prompt_tokens=100_000, group_size=group_size)
    tools = Toolbox(provider=provider, page_fetcher=provider.fetch)
    return build_group_batch(
        QUESTION,
        "right",
        backend=backend,
        judge_backend=backend,
        tools=tools,
        config=config,
    )


class TestBuildGroupBatch:
    def test_mixed_rewards_produce_normalized_advantages(self):
        artifacts = mixed_group_artifacts()
        rewards = [t.trajectory.reward for t in artifacts.results]
        assert set(rewards) == {0.0, 1.0}  # genuinely mixed

        n = len(rewards)
        mean = sum(rewards) / n
        std = math.sqrt(sum((r - mean) ** 2 for r in rewards) / n)
        for sample, reward in zip(artifacts.batch.sys2_samples, rewards):
            assert sample.reward == reward
            assert sample.advantage == (reward - mean) / std

    def test_sys1_samples_inherit_reward_and_group_advantage(self):
        artifacts = mixed_group_artifacts()
        all_sys1 = [s for r in artifacts.results for s in r.sys1_samples]
        rewards = [s.reward for s in all_sys1]
        mean = sum(rewards) / len(rewards)
        std = math.sqrt(sum((r - mean) ** 2 for r in rewards) / len(rewards))
        rewards_by_id = {r.trajectory.trajectory_id: r.trajectory.reward for r in artifacts.results}
        for sample in all_sys1:
            assert sample.reward == rewards_by_id[sample.trajectory_id]
            assert sample.advantage == (sample.reward - mean) / std
        # balancing preserved the pre-sampling advantage values
        originals = {(s.trajectory_id, s.turn_index, s.bin_index): s.advantage for s in all_sys1}
        for sample in artifacts.batch.sys1_samples:
            assert sample.advantage == originals[(sample.trajectory_id, sample.turn_index, sample.bin_index)]

    def test_batch_counts(self):
        artifacts = mixed_group_artifacts(group_size=4)
        assert len(artifacts.batch.sys2_samples) == 4
        assert len(artifacts.batch.sys1_samples) == 4
        assert not artifacts.batch.sys1_empty
        assert artifacts.batch.question_id == question_id(QUESTION)

    def test_answer_only_group_flags_empty_sys1(self):
        backend = ScriptedBackend(
            sys2_turns=["<think>sure</think><answer>right</answer>"],
            judge_reply=judge_by_response,
        )
        config = RunConfig(group_size=3, sys2_max_prompt_tokens=100_000)
        artifacts = build_group_batch(
            QUESTION,
            "right",
            backend=backend,
            judge_backend=backend,
            tools=Toolbox(),
            config=config,
        )
        assert artifacts.batch.sys1_empty
        assert artifacts.batch.sys1_samples == ()
        assert len(artifacts.batch.sys2_samples) == 3
        assert all(
            t.trajectory.status is TrajectoryStatus.ANSWERED for t in artifacts.results
        )

    def test_deterministic_across_calls(self):
        first = mixed_group_artifacts()
        second = mixed_group_artifacts()
        assert first.batch == second.batch


class TestSeedSplitHarness:
    def test_backend_discriminates_by_seed(self):
        backend = SeedSplitBackend(sys1_reply="x", judge_reply=judge_by_response)
        from dualsys.core import Message

        base = [Message("system", "You are an expert researcher ..."), Message("user", "q")]
        history = base + [Message("assistant", SEARCH_CALL), Message("tool", "obs")]
        even = backend.complete(history, seed=2).text
        odd = backend.complete(history, seed=3).text
        assert "right" in even and "wrong" in odd
