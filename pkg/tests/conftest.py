"""Shared fixtures and helpers."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from dualsys.core import ToolKind, ToolOutput, WhitespaceTokenizer


@pytest.fixture
def tokenizer():
    return WhitespaceTokenizer()


def words(n: int, prefix: str = "w") -> str:
    """Content with exactly n whitespace tokens."""
    return " ".join(f"{prefix}{i}" for i in range(n))


def doc(n_words: int, source: str = "doc", origin: ToolKind = ToolKind.SEARCH) -> ToolOutput:
    """A tool output whose content counts exactly n_words under the word counter."""
    return ToolOutput(
        source=source, title="", content=words(n_words, prefix=f"{source}-"), origin=origin
    )


class _Handler(BaseHTTPRequestHandler):
    """Scriptable handler; the server instance carries the routing table."""

    def _respond(self):
        self.server.request_log.append((self.command, self.path))
        route = self.server.routes.get(self.path.split("?")[0])
        if route is None:
            self.send_response(404)
            self.end_headers()
            self.wfile.write(b"not found")
            return
        status, content_type, body = route(self)
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.end_headers()
        self.wfile.write(body if isinstance(body, bytes) else body.encode("utf-8"))

    do_GET = _respond
    do_POST = _respond

    def log_message(self, *args):
        pass


class LocalHttp:
    """Tiny threaded HTTP server for exercising the live clients."""

    def __init__(self):
        self.server = HTTPServer(("127.0.0.1", 0), _Handler)
        self.server.routes = {}
        self.server.request_log = []
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    @property
    def request_log(self):
        return self.server.request_log

    def route(self, path: str, fn):
        self.server.routes[path] = fn

    def route_json(self, path: str, payload, status: int = 200):
        body = json.dumps(payload)
        self.route(path, lambda handler: (status, "application/json", body))

    def route_html(self, path: str, html: str, status: int = 200):
        self.route(path, lambda handler: (status, "text/html", html))

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def local_http():
    server = LocalHttp()
    yield server
    server.close()
