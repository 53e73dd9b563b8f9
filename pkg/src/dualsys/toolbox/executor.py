"""Tool request execution with per-query caps and record/replay."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable

from ..core import RunConfig, ToolKind, ToolOutput, ToolRequest
from ..errors import FetchError, InvalidInput, ReplayMiss, SandboxTimeout
from .providers import fetch_page
from .replay import ReplayMode, ReplayStore
from .types import SANDBOX_SOURCE, CacheKey, Sandbox, SearchProvider

logger = logging.getLogger(__name__)

PageFetcher = Callable[[str], ToolOutput]


class Toolbox:
    """Executes tool requests against a provider, fetcher, and sandbox.

    In REPLAY mode no backend is touched: misses raise ReplayMiss. RECORD
    serves stored results when present and records live ones otherwise, so
    re-recording an unchanged run is a no-op.
    """

    def __init__(
        self,
        provider: SearchProvider | None = None,
        sandbox: Sandbox | None = None,
        page_fetcher: PageFetcher | None = None,
        *,
        mode: ReplayMode = ReplayMode.LIVE,
        store: ReplayStore | None = None,
    ):
        if mode is not ReplayMode.LIVE and store is None:
            raise InvalidInput(f"{mode.value} mode requires a replay store")
        self.provider = provider
        self.sandbox = sandbox
        self.page_fetcher = page_fetcher or fetch_page
        self.mode = mode
        self.store = store

    # -- cache plumbing --------------------------------------------------

    def _cached(self, key: CacheKey, produce: Callable[[], list[ToolOutput]]) -> list[ToolOutput]:
        if self.mode is ReplayMode.REPLAY:
            assert self.store is not None
            return self.store.fetch(key)
        if self.mode is ReplayMode.RECORD:
            assert self.store is not None
            stored = self.store.get(key)
            if stored is not None:
                return stored
            outputs = produce()
            self.store.put(key, outputs)
            return outputs
        return produce()

    # -- live paths ------------------------------------------------------

    def _require_provider(self) -> SearchProvider:
        if self.provider is None:
            raise InvalidInput("no search provider configured")
        return self.provider

    def _require_sandbox(self) -> Sandbox:
        if self.sandbox is None:
            raise InvalidInput("no sandbox configured")
        return self.sandbox

    def _live_search(self, query: str, cap: int) -> list[ToolOutput]:
        hits = self._require_provider().search(query, cap)[:cap]
        pages: list[ToolOutput] = []
        for hit in hits:
            try:
                page = self.page_fetcher(hit.url)
            except FetchError as exc:
                logger.warning("skipping %s: %s", hit.url, exc)
                continue
            if not page.title and hit.title:
                page = ToolOutput(
                    source=page.source,
                    title=hit.title,
                    content=page.content,
                    origin=ToolKind.SEARCH,
                    truncated=page.truncated,
                )
            if not page.content:
                logger.info("page %s has no extractable text; keeping it empty", page.source)
            pages.append(page)
        return pages

    def _live_scholar(self, query: str, cap: int) -> list[ToolOutput]:
        hits = self._require_provider().scholar(query, cap)[:cap]
        return [
            ToolOutput(source=h.identifier, title=h.title, content=h.text, origin=ToolKind.SCHOLAR)
            for h in hits
        ]

    def _run_code(self, code: str, timeout: float) -> list[ToolOutput]:
        result = self._require_sandbox().run(code, timeout)
        if result.wall_time > timeout:
            raise SandboxTimeout(f"execution exceeded {timeout:g}s")
        content = result.stdout
        if result.stderr:
            content = f"{content}\n[stderr]\n{result.stderr}" if content else f"[stderr]\n{result.stderr}"
        return [ToolOutput(source=SANDBOX_SOURCE, title="", content=content, origin=ToolKind.PYTHON)]

    # -- public surface ----------------------------------------------------

    def execute(self, request: ToolRequest, config: RunConfig) -> list[ToolOutput]:
        """Run one tool request, honoring per-query result caps.

        Search and scholar results concatenate in query order; python yields
        exactly one output. Zero results is an empty list, not an error.
        """
        if request.kind is ToolKind.PYTHON:
            assert request.code is not None
            timeout = config.sandbox_timeout_seconds
            key = CacheKey.for_code(request.code, timeout)
            return self._cached(key, lambda: self._run_code(request.code, timeout))

        cap = (
            config.pages_per_search_query
            if request.kind is ToolKind.SEARCH
            else config.papers_per_scholar_query
        )
        live = self._live_search if request.kind is ToolKind.SEARCH else self._live_scholar
        outputs: list[ToolOutput] = []
        for query in request.queries:
            key = CacheKey.for_query(request.kind, query, cap)
            outputs.extend(self._cached(key, lambda q=query: live(q, cap))[:cap])
        return outputs


def with_replay(
    mode: ReplayMode | str,
    store_path: str | Path | None,
    *,
    provider: SearchProvider | None = None,
    sandbox: Sandbox | None = None,
    page_fetcher: PageFetcher | None = None,
) -> Toolbox:
    """Build a tool backend in the given mode.

    REPLAY requires an existing store directory; RECORD creates one.
    """
    mode = ReplayMode(mode)
    store = None
    if mode is not ReplayMode.LIVE:
        if store_path is None:
            raise InvalidInput(f"{mode.value} mode requires a store path")
        store = ReplayStore(store_path)
        if mode is ReplayMode.REPLAY and not store.root.is_dir():
            raise ReplayMiss(f"replay store {store.root} does not exist")
        if mode is ReplayMode.RECORD:
            store.ensure()
    return Toolbox(
        provider=provider,
        sandbox=sandbox,
        page_fetcher=page_fetcher,
        mode=mode,
        store=store,
    )
