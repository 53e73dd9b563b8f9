"""Shared tool-layer types: hits, execution results, cache keys."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Protocol

from ..core import ToolKind, ToolOutput

SANDBOX_SOURCE = "sandbox"


@dataclass(frozen=True)
class SearchHit:
    """One web search result before its page is fetched."""

    url: str
    title: str = ""
    snippet: str = ""


@dataclass(frozen=True)
class ScholarHit:
    """One academic search result, with whatever text the provider supplies."""

    identifier: str
    title: str = ""
    text: str = ""


@dataclass(frozen=True)
class ExecutionResult:
    """Outcome of one sandboxed code run."""

    stdout: str
    stderr: str
    exit_status: int
    wall_time: float


class SearchProvider(Protocol):
    """Adapter interface over a concrete search/scholar HTTP API."""

    def search(self, query: str, limit: int) -> list[SearchHit]: ...

    def scholar(self, query: str, limit: int) -> list[ScholarHit]: ...


class Sandbox(Protocol):
    """Code execution service: code in, streams out."""

    def run(self, code: str, timeout: float) -> ExecutionResult: ...


def normalize_query(query: str) -> str:
    """Trim, collapse internal whitespace, lowercase."""
    return " ".join(query.split()).lower()


@dataclass(frozen=True)
class CacheKey:
    """Identity of one cacheable tool call.

    Queries are normalized; code is digested verbatim. The result-cap
    parameters are part of the key so that changing a cap cannot serve
    stale, differently-sized results.
    """

    kind: ToolKind
    payload: str
    params: tuple[int, ...]

    @classmethod
    def for_query(cls, kind: ToolKind, query: str, cap: int) -> "CacheKey":
        return cls(kind=kind, payload=normalize_query(query), params=(cap,))

    @classmethod
    def for_code(cls, code: str, timeout: float) -> "CacheKey":
        digest = hashlib.sha256(code.encode("utf-8")).hexdigest()
        return cls(kind=ToolKind.PYTHON, payload=digest, params=(int(timeout),))

    def digest(self) -> str:
        canonical = json.dumps(
            {"kind": self.kind.value, "payload": self.payload, "params": list(self.params)},
            sort_keys=True,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "payload": self.payload, "params": list(self.params)}


def output_to_dict(output: ToolOutput) -> dict:
    return {
        "source": output.source,
        "title": output.title,
        "content": output.content,
        "origin": output.origin.value,
        "truncated": output.truncated,
    }


def output_from_dict(data: dict) -> ToolOutput:
    return ToolOutput(
        source=data["source"],
        title=data["title"],
        content=data["content"],
        origin=ToolKind(data["origin"]),
        truncated=bool(data.get("truncated", False)),
    )
