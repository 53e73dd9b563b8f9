"""Inference backends: live chat-completion endpoints and scripted mocks.

Both agent roles and the judge run through the same ``complete`` surface; a
backend returns the completion text plus per-token log-probabilities recorded
at generation time.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import requests

from .core import Message, Tokenizer, WhitespaceTokenizer
from .errors import BackendError, InvalidInput, ReplayMiss
from .templates import DISTILLER_SYSTEM


@dataclass(frozen=True)
class Completion:
    text: str
    logprobs: tuple[float, ...] = ()


class InferenceBackend(Protocol):
    def complete(
        self,
        messages: Sequence[Message],
        *,
        temperature: float = 1.0,
        max_tokens: int = 1024,
        seed: int | None = None,
    ) -> Completion: ...


class HttpChatBackend:
    """Client for an OpenAI-style chat completions endpoint.

    Retries transient failures with exponential backoff and surfaces
    ``BackendError`` once attempts are exhausted. The API key comes from
    ``api_key`` or the DUALSYS_API_KEY environment variable.
    """

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str | None = None,
        session: requests.Session | None = None,
        attempts: int = 3,
        base_delay: float = 0.5,
        timeout: float = 300.0,
    ):
        self.url = url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get("DUALSYS_API_KEY", "")
        self.session = session or requests.Session()
        self.attempts = attempts
        self.base_delay = base_delay
        self.timeout = timeout

    def complete(self, messages, *, temperature=1.0, max_tokens=1024, seed=None) -> Completion:
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": temperature,
            "max_tokens": max_tokens,
            "logprobs": True,
        }
        if seed is not None:
            body["seed"] = seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last: Exception | None = None
        for attempt in range(self.attempts):
            try:
                response = self.session.post(
                    f"{self.url}/chat/completions", json=body, headers=headers, timeout=self.timeout
                )
                response.raise_for_status()
                return self._parse(response.json())
            except (requests.RequestException, ValueError, KeyError) as exc:
                last = exc
                if attempt < self.attempts - 1 and self.base_delay > 0:
                    time.sleep(self.base_delay * (2**attempt))
        raise BackendError(f"inference endpoint failed after {self.attempts} attempts: {last}") from last

    @staticmethod
    def _parse(data: dict) -> Completion:
        choice = data["choices"][0]
        text = choice["message"]["content"] or ""
        logprobs: tuple[float, ...] = ()
        lp = choice.get("logprobs") or {}
        content = lp.get("content")
        if content:
            logprobs = tuple(float(item["logprob"]) for item in content)
        return Completion(text=text, logprobs=logprobs)


def _default_distill_reply(messages: Sequence[Message]) -> str:
    """Fallback distiller script: echo the source headers of the bin."""
    user = messages[-1].content
    sources = [line for line in user.splitlines() if line.startswith("[Source]")]
    if not sources:
        return "(nothing extracted)"
    return "Extracted from:\n" + "\n".join(sources)


class ScriptedBackend:
    """Deterministic backend for tests, desk runs, and replays.

    Routing follows the prompt itself, mirroring how one model plays several
    roles: a distiller system prompt selects the distillation script, a
    grading prompt (single user message with the bracketed headers) selects
    the judge script, anything else is a researcher call answered by turn
    index (the number of assistant messages already in the prompt). Scripts
    shorter than a rollout repeat their last entry, which is how fixtures
    express a model that never answers.

    Pure given its script: thread-safe and seed-independent.
    """

    def __init__(
        self,
        sys2_turns: Sequence[str] = (),
        *,
        sys2_by_question: Mapping[str, Sequence[str]] | None = None,
        sys1_reply: str | Callable[[Sequence[Message]], str] | None = None,
        judge_reply: str | Callable[[Sequence[Message]], str] = "correct: yes",
        binary_reply: str | Callable[[Sequence[Message]], str] = "1",
        tokenizer: Tokenizer | None = None,
        token_logprob: float = -0.1,
    ):
        self.sys2_turns = list(sys2_turns)
        self.sys2_by_question = {q: list(t) for q, t in (sys2_by_question or {}).items()}
        self.sys1_reply = sys1_reply
        self.judge_reply = judge_reply
        self.binary_reply = binary_reply
        self.tokenizer = tokenizer or WhitespaceTokenizer()
        self.token_logprob = token_logprob
        self.calls: list[str] = []  # role of every call, for instrumented tests
        self._lock = threading.Lock()

    def _record(self, role: str) -> None:
        with self._lock:
            self.calls.append(role)

    def _completion(self, text: str) -> Completion:
        n = len(self.tokenizer.encode(text))
        return Completion(text=text, logprobs=(self.token_logprob,) * n)

    def complete(self, messages, *, temperature=1.0, max_tokens=1024, seed=None) -> Completion:
        if messages and messages[0].role == "system" and messages[0].content == DISTILLER_SYSTEM:
            self._record("sys1")
            reply = self.sys1_reply
            if reply is None:
                return self._completion(_default_distill_reply(messages))
            if callable(reply):
                return self._completion(reply(messages))
            return self._completion(reply)

        if len(messages) == 1 and messages[0].role == "user" and "[correct_answer]" in messages[0].content:
            self._record("judge")
            reply = self.judge_reply
            text = reply(messages) if callable(reply) else reply
            return self._completion(text)

        if len(messages) == 1 and messages[0].role == "user" and "### Your Judgment ###" in messages[0].content:
            self._record("binary")
            reply = self.binary_reply
            text = reply(messages) if callable(reply) else reply
            return self._completion(text)

        self._record("sys2")
        question = next((m.content for m in messages if m.role == "user"), "")
        turns = self.sys2_by_question.get(question, self.sys2_turns)
        if not turns:
            raise BackendError("scripted backend has no researcher turns for this question")
        index = sum(1 for m in messages if m.role == "assistant")
        return self._completion(turns[min(index, len(turns) - 1)])

    @classmethod
    def from_file(cls, path: str | Path, tokenizer: Tokenizer | None = None) -> "ScriptedBackend":
        """Load a script file.

        JSON shape: {"sys2": [..] or {question: [..]}, "sys1": str,
        "judge": str, "binary": str}. Either sys2 form may be omitted for
        judge-only use.
        """
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        sys2 = data.get("sys2", [])
        kwargs = dict(
            sys1_reply=data.get("sys1"),
            judge_reply=data.get("judge", "correct: yes"),
            binary_reply=data.get("binary", "1"),
            tokenizer=tokenizer,
        )
        if isinstance(sys2, dict):
            return cls(sys2_by_question=sys2, **kwargs)
        return cls(sys2_turns=sys2, **kwargs)


class CachingBackend:
    """Record/replay wrapper around another backend.

    Completions are cached by a digest of the full request (messages plus
    sampling parameters) as one JSON file each, so live runs can be re-executed
    deterministically afterwards.
    """

    def __init__(self, inner: InferenceBackend | None, root: str | Path, *, replay_only: bool = False):
        if inner is None and not replay_only:
            raise InvalidInput("a recording backend needs an inner backend")
        self.inner = inner
        self.root = Path(root)
        self.replay_only = replay_only
        self._lock = threading.Lock()

    @staticmethod
    def _key(messages, temperature, max_tokens, seed) -> str:
        canonical = json.dumps(
            {
                "messages": [[m.role, m.content] for m in messages],
                "temperature": temperature,
                "max_tokens": max_tokens,
                "seed": seed,
            },
            sort_keys=True,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def complete(self, messages, *, temperature=1.0, max_tokens=1024, seed=None) -> Completion:
        path = self.root / f"{self._key(messages, temperature, max_tokens, seed)}.json"
        if path.exists():
            data = json.loads(path.read_text(encoding="utf-8"))
            return Completion(text=data["text"], logprobs=tuple(data["logprobs"]))
        if self.replay_only or self.inner is None:
            raise ReplayMiss(f"no recorded completion at {path.name}")
        completion = self.inner.complete(
            messages, temperature=temperature, max_tokens=max_tokens, seed=seed
        )
        with self._lock:
            if not path.exists():
                self.root.mkdir(parents=True, exist_ok=True)
                payload = {"text": completion.text, "logprobs": list(completion.logprobs)}
                tmp = path.with_suffix(".tmp")
                tmp.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
                os.replace(tmp, path)
        return completion
