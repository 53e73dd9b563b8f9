"""First Fit Decreasing packing of variable-length tool outputs.

Outputs whose token count exceeds the capacity are truncated and isolated in
their own flagged bin; the rest are sorted by decreasing count (ties broken by
original index) and placed into the first bin with room. Packing is purely
count-based: no sentence or semantic splitting.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .core import TokenCounter, ToolOutput
from .errors import InvalidCapacity, NotOversize


@dataclass(frozen=True)
class Bin:
    """A capacity-bounded group of tool outputs, the unit of distillation."""

    items: tuple[ToolOutput, ...]
    total_tokens: int
    truncated: bool = False


def truncate(output: ToolOutput, capacity: int, counter: TokenCounter) -> ToolOutput:
    """Cut an oversize output to the largest prefix within ``capacity``.

    Keeps the head of the document and records the cut on the returned output.
    Assumes the counter is monotone in prefix length, which holds for word
    counts and for practical subword tokenizers.
    """
    if capacity <= 0:
        raise InvalidCapacity(f"capacity must be positive, got {capacity}")
    if counter(output.content) <= capacity:
        raise NotOversize("output already fits within capacity")
    lo, hi = 0, len(output.content)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if counter(output.content[:mid]) <= capacity:
            lo = mid
        else:
            hi = mid - 1
    return replace(output, content=output.content[:lo].rstrip(), truncated=True)


def pack(
    outputs: list[ToolOutput] | tuple[ToolOutput, ...],
    capacity: int,
    counter: TokenCounter,
) -> list[Bin]:
    """Pack outputs into bins of at most ``capacity`` tokens each.

    Returns isolated truncated bins first (in original output order), then the
    first-fit-decreasing bins in creation order. Every input lands in exactly
    one bin; identical inputs always yield identical bin structure.
    """
    if capacity <= 0:
        raise InvalidCapacity(f"capacity must be positive, got {capacity}")

    isolated: list[Bin] = []
    fitting: list[tuple[int, int, ToolOutput]] = []
    for index, output in enumerate(outputs):
        count = counter(output.content)
        if count > capacity:
            cut = truncate(output, capacity, counter)
            isolated.append(Bin(items=(cut,), total_tokens=counter(cut.content), truncated=True))
        else:
            fitting.append((count, index, output))

    fitting.sort(key=lambda entry: (-entry[0], entry[1]))
    bin_items: list[list[ToolOutput]] = []
    bin_totals: list[int] = []
    for count, _, output in fitting:
        for i, total in enumerate(bin_totals):
            if total + count <= capacity:
                bin_items[i].append(output)
                bin_totals[i] = total + count
                break
        else:
            bin_items.append([output])
            bin_totals.append(count)

    return isolated + [
        Bin(items=tuple(items), total_tokens=total)
        for items, total in zip(bin_items, bin_totals)
    ]
