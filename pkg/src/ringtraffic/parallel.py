"""Run many independent episodes on a process pool, results in input order."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, Sequence

from .metrics import EpisodeStats, long_run_stats
from .scenario import EpisodeConfig, run_episode


def episode_stats(config: EpisodeConfig) -> EpisodeStats:
    return long_run_stats(run_episode(config))


def default_jobs() -> int:
    return os.cpu_count() or 1


def run_stats(configs: Sequence[EpisodeConfig] | Iterable[EpisodeConfig], jobs: int | None = None,
              progress=None) -> list[EpisodeStats]:
    """Long-run stats of every config.

    Each episode owns its random streams, so the output does not depend on
    ``jobs`` or on completion order.  ``progress`` is an optional callable
    invoked with the number of finished episodes.
    """
    configs = list(configs)
    jobs = default_jobs() if jobs is None else jobs
    out: list[EpisodeStats] = []
    if jobs <= 1 or len(configs) <= 1:
        for c in configs:
            out.append(episode_stats(c))
            if progress:
                progress(len(out))
        return out
    chunk = max(1, len(configs) // (jobs * 8))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for s in pool.map(episode_stats, configs, chunksize=chunk):
            out.append(s)
            if progress:
                progress(len(out))
    return out
