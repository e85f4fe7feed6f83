"""Worker pool, seeded randomness and stable JSON output."""

from __future__ import annotations

import json
import os
import random
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

SCHEMA_VERSION = 1


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("ETALE_LAB_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Order-preserving map; uses ``ETALE_LAB_THREADS`` workers when above 1."""
    items = list(items)
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def make_rng(seed: int) -> random.Random:
    return random.Random(seed)


def dumps(obj) -> str:
    """Byte-stable JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def report(kind: str, payload: dict) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "kind": kind}
    out.update(payload)
    return out
