import os

from .errors import ValidationError

ENV_THREADS = "ADEVAL_THREADS"


def worker_count(n_tasks: int) -> int:
    """Workers to use for n_tasks, capped by the ADEVAL_THREADS env var."""
    workers = min(n_tasks, os.cpu_count() or 1)
    raw = os.environ.get(ENV_THREADS)
    if raw is not None:
        try:
            cap = int(raw)
        except ValueError:
            cap = 0
        if cap < 1:
            raise ValidationError(f"{ENV_THREADS} must be a positive integer, got {raw!r}")
        workers = min(workers, cap)
    return max(1, workers)
