"""Worker-count policy: the REC_THREADS environment variable caps every
thread pool in the package."""

from __future__ import annotations

import os


def worker_count() -> int:
    env = os.environ.get("REC_THREADS", "").strip()
    cpus = os.cpu_count() or 1
    if env:
        return max(1, min(int(env), cpus))
    return cpus
