"""Question curation: dedup, binary judging, difficulty banding, full funnel."""

import pytest

from dualsys.curation import (
    CandidateQA,
    bon_difficulty_filter,
    dedup,
    jaccard,
    judge_clarity,
    judge_expert_level,
    run_pipeline,
    shingles,
)
from dualsys.errors import UnparseableJudgment
from dualsys.inference import Completion, ScriptedBackend

from conftest import words


class ReplyBackend:
    """Returns a fixed or computed reply; counts calls."""

    def __init__(self, reply):
        self.reply = reply
        self.calls = 0

    def complete(self, messages, **kwargs):
        self.calls += 1
        text = self.reply(messages) if callable(self.reply) else self.reply
        return Completion(text=text, logprobs=())


def qa(prompt, answer="a", subject="math"):
    return CandidateQA(prompt=prompt, gold_answer=answer, subject=subject)


class TestDedup:
    def test_exact_duplicates(self):
        survivors = dedup([qa("same question"), qa("same question"), qa("different one entirely")])
        assert [c.prompt for c in survivors] == ["same question", "different one entirely"]

    def test_whitespace_and_case_normalization(self):
        survivors = dedup([qa("What is  X?"), qa("what is x?   ")])
        assert len(survivors) == 1
        assert survivors[0].prompt == "What is  X?"  # first occurrence kept

    def test_near_duplicate_dropped_at_hand_computed_similarity(self):
        # 25 words differing only in the last one: 23 3-shingles each,
        # exactly one shingle differs, so J = 22/24 = 0.9166... >= 0.9
        base_words = words(25, "t").split()
        a = " ".join(base_words)
        b = " ".join(base_words[:-1] + ["changed"])
        assert jaccard(shingles(a), shingles(b)) == pytest.approx(22 / 24)
        survivors = dedup([qa(a), qa(b)])
        assert len(survivors) == 1

    def test_moderately_similar_pair_kept(self):
        base_words = words(25, "t").split()
        a = " ".join(base_words)
        changed = list(base_words)
        for i in (3, 9, 15, 21):  # spread-out edits push similarity below 0.9
            changed[i] = f"edit{i}"
        b = " ".join(changed)
        assert jaccard(shingles(a), shingles(b)) < 0.9
        assert len(dedup([qa(a), qa(b)])) == 2

    def test_idempotent(self):
        items = [qa(words(25, "x")), qa(words(25, "y")), qa(words(25, "x"))]
        once = dedup(items)
        assert dedup(once) == once

    def test_survivors_flagged(self):
        assert all(c.deduped for c in dedup([qa("alpha"), qa("beta gamma")]))


class TestBinaryJudges:
    def test_clarity_kept(self):
        assert judge_clarity(qa("clear?"), ReplyBackend("1")) == 1

    def test_clarity_dropped(self):
        assert judge_clarity(qa("vague?"), ReplyBackend("0")) == 0

    def test_unparseable_after_retries(self):
        backend = ReplyBackend("maybe")
        with pytest.raises(UnparseableJudgment):
            judge_clarity(qa("hmm"), backend)
        assert backend.calls == 3

    def test_expert_template_mentions_definition(self):
        seen = {}

        def capture(messages):
            seen["prompt"] = messages[0].content
            return "1"

        judge_expert_level(qa("hard question"), ReplyBackend(capture))
        assert "Expert-level Knowledge" in seen["prompt"]
        assert "hard question" in seen["prompt"]

    def test_clarity_template_mentions_definition(self):
        seen = {}

        def capture(messages):
            seen["prompt"] = messages[0].content
            return "1"

        judge_clarity(qa("q"), ReplyBackend(capture))
        assert '"Clarity"' in seen["prompt"]

    def test_scripted_backend_binary_route(self):
        backend = ScriptedBackend(binary_reply="0")
        assert judge_clarity(qa("q"), backend) == 0
        assert backend.calls == ["binary"]


class TestBonFilter:
    def _counting_fn(self, successes):
        calls = {"n": 0}

        def fn(candidate):
            calls["n"] += 1
            return 1 if calls["n"] <= successes else 0

        return fn

    def test_moderate_difficulty_kept(self):
        keep, count = bon_difficulty_filter(qa("q"), self._counting_fn(5))
        assert keep and count == 5

    def test_never_correct_dropped(self):
        keep, count = bon_difficulty_filter(qa("q"), self._counting_fn(0))
        assert not keep and count == 0

    def test_too_easy_dropped(self):
        keep, count = bon_difficulty_filter(qa("q"), self._counting_fn(13))
        assert not keep and count == 13

    def test_band_edges(self):
        assert bon_difficulty_filter(qa("q"), self._counting_fn(1)) == (True, 1)
        assert bon_difficulty_filter(qa("q"), self._counting_fn(12)) == (True, 12)

    def test_attempt_failures_count_as_incorrect(self):
        calls = {"n": 0}

        def flaky(candidate):
            calls["n"] += 1
            if calls["n"] % 2 == 0:
                raise RuntimeError("attempt crashed")
            return 1

        keep, count = bon_difficulty_filter(qa("q"), flaky)
        assert count == 8  # odd attempts of 16 succeed
        assert keep

    def test_runs_exactly_n_attempts(self):
        calls = {"n": 0}

        def fn(candidate):
            calls["n"] += 1
            return 0

        bon_difficulty_filter(qa("q"), fn, n_attempts=16)
        assert calls["n"] == 16


class TestPipeline:
    def _bank(self):
        # ten items: two near-identical, one unclear, one not expert-level,
        # one too easy, one impossible; the rest survive
        base = words(25, "b").split()
        near_a = " ".join(base)
        near_b = " ".join(base[:-1] + ["tweaked"])
        items = [
            qa(near_a, subject="s0"),
            qa(near_b, subject="s1"),
            qa("unclear " + words(8, "u"), subject="s2"),
            qa("shallow " + words(8, "s"), subject="s3"),
            qa("easy " + words(8, "e"), subject="s4"),
            qa("impossible " + words(8, "i"), subject="s5"),
            qa("good one " + words(8, "g1"), subject="s6"),
            qa("good two " + words(8, "g2"), subject="s7"),
            qa("good three " + words(8, "g3"), subject="s8"),
            qa("good four " + words(8, "g4"), subject="s9"),
        ]
        return items

    def _judge(self):
        def binary(messages):
            prompt = messages[0].content
            if "unclear" in prompt:
                return "0"
            if "### QA Pair ###" in prompt and "shallow" in prompt:
                return "0"
            return "1"

        return ReplyBackend(binary)

    def _rollout_fn(self):
        counts = {"easy": 16, "impossible": 0}
        state: dict[str, int] = {}

        def fn(candidate):
            first_word = candidate.prompt.split()[0]
            target = counts.get(first_word, 6)
            state[candidate.prompt] = state.get(candidate.prompt, 0) + 1
            return 1 if state[candidate.prompt] <= target else 0

        return fn

    def test_stage_counts_match_hand_computation(self):
        survivors, report = run_pipeline(
            self._bank(), judge_backend=self._judge(), rollout_fn=self._rollout_fn()
        )
        by_stage = {s.stage: (s.entering, s.surviving) for s in report.stages}
        assert by_stage["level"] == (10, 10)
        assert by_stage["dedup"] == (10, 9)  # near-duplicate pair collapses
        assert by_stage["clarity"] == (9, 8)  # "unclear" drops
        assert by_stage["expert"] == (8, 7)  # "shallow" drops
        assert by_stage["bon"] == (7, 5)  # "easy" (16/16) and "impossible" (0/16) drop
        assert len(survivors) == 5
        assert all(1 <= c.bon_correct_count <= 12 for c in survivors)

    def test_stage_monotonicity(self):
        _, report = run_pipeline(
            self._bank(), judge_backend=self._judge(), rollout_fn=self._rollout_fn()
        )
        for stage in report.stages:
            assert stage.surviving <= stage.entering

    def test_empty_input(self):
        survivors, report = run_pipeline(
            [], judge_backend=ReplyBackend("1"), rollout_fn=lambda qa: 1
        )
        assert survivors == []
        assert all(s.entering == 0 and s.surviving == 0 for s in report.stages)

    def test_level_filter_applies_first(self):
        survivors, report = run_pipeline(
            self._bank(),
            judge_backend=self._judge(),
            rollout_fn=self._rollout_fn(),
            level_filter=lambda c: c.subject != "s9",
        )
        by_stage = {s.stage: (s.entering, s.surviving) for s in report.stages}
        assert by_stage["level"] == (10, 9)

    def test_judge_failure_drops_item_not_run(self):
        def binary(messages):
            if "good one" in messages[0].content:
                return "banana"
            return "1"

        survivors, _ = run_pipeline(
            self._bank(), judge_backend=ReplyBackend(binary), rollout_fn=self._rollout_fn()
        )
        assert all("good one" not in c.prompt for c in survivors)
        assert survivors  # the rest of the run still completed

    def test_rerun_is_deterministic(self):
        first = run_pipeline(
            self._bank(), judge_backend=self._judge(), rollout_fn=self._rollout_fn()
        )
        second = run_pipeline(
            self._bank(), judge_backend=self._judge(), rollout_fn=self._rollout_fn()
        )
        assert first[0] == second[0]
        assert first[1] == second[1]
