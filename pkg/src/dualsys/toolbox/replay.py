"""Record/replay store for deterministic tool results.

Each cacheable call is persisted as one JSON file named by the cache key's
digest, holding the key fields and the serialized outputs. Writes are
atomic-by-rename and idempotent: recording the same key twice leaves the
store byte-identical.
"""

from __future__ import annotations

import json
import os
import threading
from enum import Enum
from pathlib import Path

from ..core import ToolOutput
from ..errors import ReplayMiss
from .types import CacheKey, output_from_dict, output_to_dict


class ReplayMode(str, Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


class ReplayStore:
    """Directory-backed cache of tool responses.

    Reads are lock-free; writes are serialized so concurrent rollouts cannot
    interleave partial files.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._write_lock = threading.Lock()

    def ensure(self) -> "ReplayStore":
        self.root.mkdir(parents=True, exist_ok=True)
        return self

    def _path(self, key: CacheKey) -> Path:
        return self.root / f"{key.digest()}.json"

    def has(self, key: CacheKey) -> bool:
        return self._path(key).exists()

    def get(self, key: CacheKey) -> list[ToolOutput] | None:
        path = self._path(key)
        if not path.exists():
            return None
        data = json.loads(path.read_text(encoding="utf-8"))
        return [output_from_dict(item) for item in data["outputs"]]

    def fetch(self, key: CacheKey) -> list[ToolOutput]:
        outputs = self.get(key)
        if outputs is None:
            raise ReplayMiss(f"no recorded response for {key.to_dict()}")
        return outputs

    def put(self, key: CacheKey, outputs: list[ToolOutput]) -> None:
        path = self._path(key)
        with self._write_lock:
            if path.exists():
                return  # idempotent: first recording wins
            self.root.mkdir(parents=True, exist_ok=True)
            record = {"key": key.to_dict(), "outputs": [output_to_dict(o) for o in outputs]}
            text = json.dumps(record, sort_keys=True, indent=2) + "\n"
            tmp = path.with_suffix(".tmp")
            tmp.write_text(text, encoding="utf-8")
            os.replace(tmp, path)
