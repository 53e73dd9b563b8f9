"""Clients for the external code-execution service.

Execution is always remote (code in, streams out over HTTPS JSON); running
model-written code in-process is deliberately unsupported. ``StaticSandbox``
serves scripted results for tests and desk runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import requests

from ..errors import SandboxTimeout, ToolUnavailable
from .providers import with_retries
from .types import ExecutionResult


class HttpSandbox:
    """POSTs {"code", "timeout"} and expects {"stdout", "stderr", "exit_status"}."""

    def __init__(self, url: str, session: requests.Session | None = None, attempts: int = 3):
        self.url = url
        self.session = session or requests.Session()
        self.attempts = attempts

    def run(self, code: str, timeout: float) -> ExecutionResult:
        started = time.monotonic()

        def attempt():
            # Allow the service a little slack beyond the code budget.
            response = self.session.post(
                self.url,
                json={"code": code, "timeout": timeout},
                timeout=timeout + 10.0,
            )
            response.raise_for_status()
            return response.json()

        try:
            data = with_retries(attempt, attempts=self.attempts)
        except ToolUnavailable:
            if time.monotonic() - started > timeout:
                raise SandboxTimeout(f"execution exceeded {timeout:g}s") from None
            raise
        wall = float(data.get("wall_time", time.monotonic() - started))
        if data.get("status") == "timeout" or wall > timeout:
            raise SandboxTimeout(f"execution exceeded {timeout:g}s")
        return ExecutionResult(
            stdout=data.get("stdout", ""),
            stderr=data.get("stderr", ""),
            exit_status=int(data.get("exit_status", 0)),
            wall_time=wall,
        )


@dataclass
class StaticSandbox:
    """Scripted sandbox keyed by exact code text."""

    results: dict[str, ExecutionResult] = field(default_factory=dict)
    default: ExecutionResult | None = None

    def run(self, code: str, timeout: float) -> ExecutionResult:
        result = self.results.get(code, self.default)
        if result is None:
            raise ToolUnavailable(f"no scripted result for code {code!r}")
        if result.wall_time > timeout:
            raise SandboxTimeout(f"execution exceeded {timeout:g}s")
        return result
