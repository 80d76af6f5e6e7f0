"""Collects one status line per acceptance criterion for the terminal summary."""
from __future__ import annotations

_RESULTS: dict[str, str] = {}


def record(key: str, status: str, detail: str) -> str:
    line = f"criterion {key:>4}  {status:<4}  {detail}"
    _RESULTS[key] = line
    return line


def lines() -> list[str]:
    def order(k: str):
        head, _, tail = k.partition(".")
        return int(head), tail

    return [_RESULTS[k] for k in sorted(_RESULTS, key=order)]
