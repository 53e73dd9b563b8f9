"""Tool execution: search/scholar providers, sandbox client, record/replay."""

from .executor import PageFetcher, Toolbox, with_replay
from .providers import (
    RateLimiter,
    SerpApiProvider,
    StaticProvider,
    fetch_page,
    html_to_text,
    load_static_tools,
    with_retries,
)
from .replay import ReplayMode, ReplayStore
from .sandbox import HttpSandbox, StaticSandbox
from .types import (
    SANDBOX_SOURCE,
    CacheKey,
    ExecutionResult,
    Sandbox,
    ScholarHit,
    SearchHit,
    SearchProvider,
    normalize_query,
)

__all__ = [
    "CacheKey",
    "ExecutionResult",
    "HttpSandbox",
    "PageFetcher",
    "RateLimiter",
    "ReplayMode",
    "ReplayStore",
    "SANDBOX_SOURCE",
    "Sandbox",
    "ScholarHit",
    "SearchHit",
    "SearchProvider",
    "SerpApiProvider",
    "StaticProvider",
    "StaticSandbox",
    "Toolbox",
    "fetch_page",
    "html_to_text",
    "load_static_tools",
    "normalize_query",
    "with_replay",
    "with_retries",
]
