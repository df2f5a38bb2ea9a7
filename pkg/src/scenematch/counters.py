"""Process-wide instrumentation counters (encoder invocations, scans).

Used by the latency bench to assert the dual-encoder property: answering a
query never invokes an encoder per candidate pair.
"""

from __future__ import annotations

from collections import Counter

_counts: Counter[str] = Counter()


def bump(name: str, by: int = 1) -> None:
    _counts[name] += by


def value(name: str) -> int:
    return _counts[name]


def reset() -> None:
    _counts.clear()


def snapshot() -> dict[str, int]:
    return dict(_counts)
