"""Pluggable token counting and encoding.

The domain types never embed a tokenizer; packing, budget checks, and sample
building all accept any implementation of these two shapes. Production runs
wire a model tokenizer; tests and desk runs use whitespace words.
"""

from __future__ import annotations

import hashlib
from typing import Callable, Protocol

# A token counter is any pure function text -> non-negative int.
TokenCounter = Callable[[str], int]


class Tokenizer(Protocol):
    """Minimal tokenizer surface used for sample building and counting."""

    def encode(self, text: str) -> list[int]: ...

    def count(self, text: str) -> int: ...


class WhitespaceTokenizer:
    """Test/reference tokenizer: one token per whitespace-delimited word.

    Ids are stable digests of the word so that identical words map to
    identical ids across runs and processes.
    """

    def encode(self, text: str) -> list[int]:
        return [self._word_id(w) for w in text.split()]

    def count(self, text: str) -> int:
        return len(text.split())

    @staticmethod
    def _word_id(word: str) -> int:
        return int.from_bytes(hashlib.blake2b(word.encode("utf-8"), digest_size=4).digest(), "big")


def whitespace_count(text: str) -> int:
    """Word-count token counter used throughout the tests."""
    return len(text.split())
