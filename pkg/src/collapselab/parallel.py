"""Deterministic fan-out of ensemble chunks over a process pool.

Work is split into fixed chunks by the caller; this module only decides
how many processes execute them.  Results are always returned in task
order, and every random stream is keyed by trajectory index rather than
by worker, so the outputs are identical for any worker count.

The environment variable ``COLLAPSE_LAB_WORKERS`` overrides any worker
count passed programmatically or on the command line.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

from .errors import InvalidParameterError

WORKERS_ENV_VAR = "COLLAPSE_LAB_WORKERS"


def resolve_workers(workers=None):
    """Effective worker count: env override, then argument, then 1."""
    env = os.environ.get(WORKERS_ENV_VAR)
    if env is not None:
        try:
            workers = int(env)
        except ValueError:
            raise InvalidParameterError(WORKERS_ENV_VAR, f"not an integer: {env!r}") from None
    if workers is None:
        workers = 1
    workers = int(workers)
    if workers < 1:
        raise InvalidParameterError("workers", f"must be >= 1, got {workers}")
    return workers


def deterministic_map(task_fn, tasks, workers=None):
    """Run ``task_fn`` over ``tasks``; results in task order.

    With one worker the tasks run inline (no fork overhead, easier
    debugging); otherwise a process pool maps them while order is
    preserved by the executor.
    """
    workers = resolve_workers(workers)
    if workers == 1 or len(tasks) <= 1:
        return [task_fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(task_fn, tasks))
