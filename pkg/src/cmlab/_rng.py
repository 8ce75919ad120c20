"""Deterministic chunked randomness for Monte Carlo work.

Every Monte Carlo operation splits its sample budget into ``N_CHUNKS`` fixed
chunks with child seeds derived from the user seed via
``numpy.random.SeedSequence.spawn``.  The chunk layout never depends on the
worker count, so results are bit-identical whether chunks run sequentially
or on a thread pool; ``CMLAB_THREADS`` only caps the pool size.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

# Fixed fan-out of every Monte Carlo call. Changing this changes the random
# stream, so it is a constant, not a config knob.
N_CHUNKS = 16


def worker_count() -> int:
    """Worker cap from the CMLAB_THREADS environment variable (default 1)."""
    raw = os.environ.get("CMLAB_THREADS", "").strip()
    if not raw:
        return 1
    try:
        k = int(raw)
    except ValueError:
        return 1
    return max(1, min(k, N_CHUNKS))


def chunk_sizes(n: int, n_chunks: int = N_CHUNKS) -> list[int]:
    base, extra = divmod(int(n), n_chunks)
    return [base + (1 if i < extra else 0) for i in range(n_chunks)]


def chunk_rngs(seed, n_chunks: int = N_CHUNKS) -> list[np.random.Generator]:
    if isinstance(seed, np.random.SeedSequence):
        seq = seed
    else:
        seq = np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in seq.spawn(n_chunks)]


def map_chunks(fn, n: int, seed) -> list:
    """Run ``fn(rng, size, chunk_index)`` over all chunks, in chunk order.

    The returned list is ordered by chunk index regardless of completion
    order, which is what makes threaded runs reproducible.
    """
    sizes = chunk_sizes(n)
    rngs = chunk_rngs(seed)
    workers = worker_count()
    if workers == 1:
        return [fn(rng, m, i) for i, (rng, m) in enumerate(zip(rngs, sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(fn, rng, m, i)
            for i, (rng, m) in enumerate(zip(rngs, sizes))
        ]
        return [f.result() for f in futures]


@dataclass(frozen=True, slots=True)
class MonteCarloEstimate:
    """A Monte Carlo mean with its standard error and sample count."""

    value: float
    stderr: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")


def merge_moments(parts) -> MonteCarloEstimate:
    """Combine per-chunk ``(sum, sum_of_squares, count)`` triples."""
    s1 = 0.0
    s2 = 0.0
    n = 0
    for a, b, m in parts:
        s1 += float(a)
        s2 += float(b)
        n += int(m)
    if n < 1:
        raise ValueError("no samples to merge")
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0)
    stderr = float(np.sqrt(var / n))
    return MonteCarloEstimate(value=mean, stderr=stderr, n=n)
