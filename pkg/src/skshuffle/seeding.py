"""Deterministic per-replica seeds and a thread pool for the nogil kernels."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

SEED_ENV = "SKSHUFFLE_SEED"
DEFAULT_SEED = 20240101


def default_seed() -> tuple[int, str]:
    """(seed, source) where source is 'env' or 'default'."""
    raw = os.environ.get(SEED_ENV)
    if raw is not None and raw.strip():
        return int(raw), "env"
    return DEFAULT_SEED, "default"


def replica_seed(master_seed: int, tag: str, N: int, k: int, replica: int) -> int:
    """64-bit seed from (master seed, experiment tag, N, k, replica index)."""
    msg = f"{int(master_seed)}|{tag}|{int(N)}|{int(k)}|{int(replica)}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def master_from(rng) -> int:
    """Accept an int seed or a Generator (one draw) and return a master seed."""
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    if rng is None:
        return default_seed()[0]
    return int(rng)


def replica_generators(master_seed: int, tag: str, N: int, k: int, replicas: int,
                       offset: int = 0) -> list[np.random.Generator]:
    return [np.random.default_rng(replica_seed(master_seed, tag, N, k, r))
            for r in range(offset, offset + replicas)]


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def run_replicas(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """``[fn(x) for x in items]`` on a thread pool; output order follows ``items``."""
    workers = workers or default_workers()
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
