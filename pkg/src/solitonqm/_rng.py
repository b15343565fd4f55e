"""Deterministic random substreams and order-preserving parallel map.

Every random quantity in the package is drawn from a substream keyed by
``(seed, tag, block_index)``.  Items (trials, paths, samples) are grouped in
fixed-size blocks, so the stream feeding item ``i`` depends only on the seed,
the tag and ``i // block_size``.  Workers only change *who* computes a block,
never *what* it computes, and reductions are always combined in block order.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

DEFAULT_SEED = 20060125
DEFAULT_BLOCK = 1024

T = TypeVar("T")
R = TypeVar("R")


def tag_key(tag: str | int) -> int:
    if isinstance(tag, int):
        return tag
    return zlib.crc32(tag.encode("utf8"))


def substream(seed: int, tag: str | int, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, tag, index)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag_key(tag), int(index)))
    return np.random.default_rng(ss)


def blocks(n_items: int, block_size: int = DEFAULT_BLOCK) -> list[tuple[int, int, int]]:
    """``(block_index, start, stop)`` triples covering ``range(n_items)``."""
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    return [
        (b, start, min(start + block_size, n_items))
        for b, start in enumerate(range(0, n_items, block_size))
    ]


def pmap(fn: Callable[[T], R], tasks: Iterable[T], workers: int = 1) -> list[R]:
    """Map preserving task order; ``workers > 1`` uses a thread pool."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def ordered_sum(parts: Sequence[np.ndarray | float]):
    """Left-to-right sum (fixed topology, independent of scheduling)."""
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def blocked_draw(
    seed: int,
    tag: str | int,
    n_items: int,
    draw: Callable[[np.random.Generator, int], np.ndarray],
    block_size: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> np.ndarray:
    """Concatenate ``draw(rng_b, size_b)`` over blocks, in block order."""
    def one(blk):
        b, start, stop = blk
        return draw(substream(seed, tag, b), stop - start)

    parts = pmap(one, blocks(n_items, block_size), workers)
    if not parts:
        return np.empty(0)
    return np.concatenate(parts, axis=0)
