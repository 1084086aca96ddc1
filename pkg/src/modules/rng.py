"""
Counter-based random streams for chunked Monte Carlo

Every chunk of samples draws from its own Philox generator keyed by
(seed, stream) with the chunk index in the high counter word, so results are
a pure function of (seed, n, chunk size) whatever the thread count.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, TypeVar

import numpy as np

from .transport_base import MonteCarloSettings, ValidationError

logger = logging.getLogger(__name__)

T = TypeVar('T')

# stream ids; adding a stream never changes the draws of the existing ones
STREAM_NOISE = 0          # driving increments
STREAM_FRESH = 1          # independent increments of hybrid plans
STREAM_REFERENCE = 2      # mu-samples for the strong-solution gap
STREAM_CLOUD = 3          # subsampled clouds for the empirical OT bound
STREAM_BRIDGE = 4         # controlled SDE of the bridge check
STREAM_INSTANCES = 5      # random finite instances


@dataclass(frozen=True)
class Chunk:
    """Sample range [start, stop) of chunk `index`"""
    index: int
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start


def chunk_rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    """Philox generator for one (seed, stream, chunk) triple"""
    if not 0 <= seed < 2 ** 64:
        raise ValidationError(f"seed must be in [0, 2^64), got {seed}", '--seed')
    key = (seed << 64) | stream
    return np.random.Generator(np.random.Philox(key=key, counter=chunk << 192))


def chunks(n: int, chunk_size: int) -> List[Chunk]:
    if n < 1:
        raise ValidationError(f"sample count must be positive, got {n}", '--samples')
    return [Chunk(c, start, min(start + chunk_size, n))
            for c, start in enumerate(range(0, n, chunk_size))]


def map_chunks(func: Callable[[Chunk, np.random.Generator], T], n: int, seed: int, stream: int,
               settings: Optional[MonteCarloSettings] = None) -> List[T]:
    """
    Runs func over all chunks, results in chunk order

    Args:
        func: Called as func(chunk, rng) with the chunk's own generator
        n: Total sample count
        seed: User seed
        stream: Stream id (one per independent noise source)
        settings: chunk_size and thread cap
    """
    settings = settings or MonteCarloSettings()
    parts = chunks(n, settings.chunk_size)

    def run(chunk: Chunk) -> T:
        return func(chunk, chunk_rng(seed, stream, chunk.index))

    workers = max(1, min(settings.threads, len(parts)))
    if workers == 1:
        return [run(chunk) for chunk in parts]
    logger.debug(f"{len(parts)} chunks on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, parts))
