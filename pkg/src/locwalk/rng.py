"""Counter-based random streams keyed by ``(seed, *stream_ids)``.

Every chain, path or grid point draws from its own Philox stream, so results do
not depend on how work is scheduled across threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def stream(seed: int, *stream_ids: int) -> np.random.Generator:
    """Return the Philox generator for ``seed`` and a (possibly nested) stream id."""
    if seed < 0 or any(s < 0 for s in stream_ids):
        raise ValueError("seed and stream ids must be nonnegative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(stream_ids))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a seed for a sub-experiment from an existing stream."""
    return int(rng.integers(0, 2**63 - 1))


def max_threads() -> int:
    raw = os.environ.get("LOCWALK_THREADS")
    if raw is None:
        return min(8, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"LOCWALK_THREADS must be an integer, got {raw!r}") from exc
    return max(1, value)


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Map ``fn`` over ``items`` using up to ``LOCWALK_THREADS`` threads.

    Results come back in input order regardless of completion order.
    """
    items = list(items)
    workers = min(max_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(0 if rng is None else int(rng))


__all__: Sequence[str] = ["stream", "child_seed", "max_threads", "ordered_map", "as_generator"]
