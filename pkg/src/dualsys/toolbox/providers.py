"""Search providers and page fetching.

``StaticProvider`` serves canned results for tests and desk runs. The HTTP
adapter speaks the serpapi.com JSON shape but any endpoint returning that
shape works; nothing else in the package knows which vendor is behind it.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field
from html.parser import HTMLParser

import requests

from ..core import ToolKind, ToolOutput
from ..errors import FetchError, ToolUnavailable
from .types import ScholarHit, SearchHit

logger = logging.getLogger(__name__)

_SKIPPED_ELEMENTS = {"script", "style", "noscript", "template", "head"}


class _TextExtractor(HTMLParser):
    """Collects visible text and the page title from an HTML document."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.chunks: list[str] = []
        self.title_chunks: list[str] = []
        self._skip_depth = 0
        self._in_title = False

    def handle_starttag(self, tag, attrs):
        if tag in _SKIPPED_ELEMENTS:
            self._skip_depth += 1
        if tag == "title":
            self._in_title = True

    def handle_endtag(self, tag):
        if tag in _SKIPPED_ELEMENTS and self._skip_depth:
            self._skip_depth -= 1
        if tag == "title":
            self._in_title = False

    def handle_data(self, data):
        if self._in_title:
            self.title_chunks.append(data)
        elif not self._skip_depth:
            self.chunks.append(data)


def html_to_text(html: str) -> tuple[str, str]:
    """Return (title, main text) with markup stripped and whitespace collapsed."""
    extractor = _TextExtractor()
    extractor.feed(html)
    title = " ".join("".join(extractor.title_chunks).split())
    lines = []
    for raw_line in "".join(extractor.chunks).splitlines():
        line = " ".join(raw_line.split())
        if line:
            lines.append(line)
    return title, "\n".join(lines)


def with_retries(fn, attempts: int = 3, base_delay: float = 0.5):
    """Run ``fn`` with exponential backoff; raise ToolUnavailable when spent."""
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return fn()
        except (requests.RequestException, ValueError) as exc:
            last = exc
            if attempt < attempts - 1 and base_delay > 0:
                time.sleep(base_delay * (2**attempt))
    raise ToolUnavailable(f"backend failed after {attempts} attempts: {last}") from last


class RateLimiter:
    """Min-interval limiter shared by one provider's calls."""

    def __init__(self, requests_per_second: float | None):
        self._interval = 0.0 if not requests_per_second else 1.0 / requests_per_second
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self) -> None:
        if self._interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next_at - now
            self._next_at = max(now, self._next_at) + self._interval
        if delay > 0:
            time.sleep(delay)


def fetch_page(url: str, session: requests.Session | None = None, timeout: float = 20.0) -> ToolOutput:
    """Fetch one page and extract its main text; failures raise FetchError."""
    http = session or requests
    try:
        response = http.get(url, timeout=timeout, headers={"User-Agent": "dualsys/0.1"})
        response.raise_for_status()
    except requests.RequestException as exc:
        raise FetchError(f"failed to fetch {url}: {exc}") from exc
    title, text = html_to_text(response.text)
    return ToolOutput(source=url, title=title, content=text, origin=ToolKind.SEARCH)


@dataclass
class StaticProvider:
    """In-memory provider for deterministic tests and desk runs.

    ``pages`` maps a URL to (title, text) and backs the bundled fetcher so no
    network is ever touched.
    """

    search_results: dict[str, list[SearchHit]] = field(default_factory=dict)
    scholar_results: dict[str, list[ScholarHit]] = field(default_factory=dict)
    pages: dict[str, tuple[str, str]] = field(default_factory=dict)

    def search(self, query: str, limit: int) -> list[SearchHit]:
        return list(self.search_results.get(query, []))[:limit]

    def scholar(self, query: str, limit: int) -> list[ScholarHit]:
        return list(self.scholar_results.get(query, []))[:limit]

    def fetch(self, url: str) -> ToolOutput:
        if url not in self.pages:
            raise FetchError(f"no static page for {url}")
        title, text = self.pages[url]
        return ToolOutput(source=url, title=title, content=text, origin=ToolKind.SEARCH)


def load_static_tools(path) -> tuple[StaticProvider, "StaticSandbox"]:
    """Load a static tool fixture file.

    JSON shape: {"search": {query: [{url, title, content}]},
    "scholar": {query: [{identifier, title, text}]},
    "python": {code: {stdout, stderr, exit_status, wall_time}}}.
    Search entries also populate the page store so fetches stay offline.
    """
    import json
    from pathlib import Path

    from .sandbox import StaticSandbox
    from .types import ExecutionResult

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    provider = StaticProvider()
    for query, entries in data.get("search", {}).items():
        hits = []
        for entry in entries:
            hits.append(SearchHit(url=entry["url"], title=entry.get("title", "")))
            provider.pages[entry["url"]] = (entry.get("title", ""), entry.get("content", ""))
        provider.search_results[query] = hits
    for query, entries in data.get("scholar", {}).items():
        provider.scholar_results[query] = [
            ScholarHit(
                identifier=entry["identifier"],
                title=entry.get("title", ""),
                text=entry.get("text", ""),
            )
            for entry in entries
        ]
    sandbox = StaticSandbox(
        results={
            code: ExecutionResult(
                stdout=entry.get("stdout", ""),
                stderr=entry.get("stderr", ""),
                exit_status=int(entry.get("exit_status", 0)),
                wall_time=float(entry.get("wall_time", 0.0)),
            )
            for code, entry in data.get("python", {}).items()
        }
    )
    return provider, sandbox


class SerpApiProvider:
    """Adapter for a serpapi-shaped JSON search endpoint.

    The API key comes from ``api_key`` or the SERPAPI_KEY environment
    variable; it is sent per request and never persisted anywhere.
    """

    def __init__(
        self,
        endpoint: str = "https://serpapi.com/search",
        api_key: str | None = None,
        session: requests.Session | None = None,
        requests_per_second: float | None = 2.0,
        timeout: float = 30.0,
    ):
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get("SERPAPI_KEY", "")
        self.session = session or requests.Session()
        self.limiter = RateLimiter(requests_per_second)
        self.timeout = timeout

    def _call(self, params: dict) -> dict:
        def attempt():
            self.limiter.wait()
            response = self.session.get(
                self.endpoint,
                params={**params, "api_key": self.api_key},
                timeout=self.timeout,
            )
            response.raise_for_status()
            return response.json()

        return with_retries(attempt)

    def search(self, query: str, limit: int) -> list[SearchHit]:
        data = self._call({"engine": "google", "q": query, "num": limit})
        hits = []
        for item in data.get("organic_results", [])[:limit]:
            url = item.get("link")
            if url:
                hits.append(SearchHit(url=url, title=item.get("title", ""), snippet=item.get("snippet", "")))
        return hits

    def scholar(self, query: str, limit: int) -> list[ScholarHit]:
        data = self._call({"engine": "google_scholar", "q": query, "num": limit})
        hits = []
        for item in data.get("organic_results", [])[:limit]:
            identifier = item.get("link") or item.get("result_id", "")
            if not identifier:
                continue
            pieces = [item.get("snippet", "")]
            summary = item.get("publication_info", {}).get("summary", "")
            if summary:
                pieces.append(summary)
            hits.append(
                ScholarHit(
                    identifier=identifier,
                    title=item.get("title", ""),
                    text="\n".join(p for p in pieces if p),
                )
            )
        return hits
