from __future__ import annotations

import os

from joblib import Parallel, delayed

__all__ = ["Parallel", "delayed", "resolve_jobs"]


def resolve_jobs(n_jobs: int | None) -> int:
    """Worker count after applying the GAITPRINT_JOBS cap."""
    n = (os.cpu_count() or 1) if n_jobs in (None, -1) else max(1, int(n_jobs))
    cap = os.environ.get("GAITPRINT_JOBS")
    if cap:
        n = min(n, max(1, int(cap)))
    return n
