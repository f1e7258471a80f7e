"""Runtime settings read from the environment."""

from __future__ import annotations

import os
from dataclasses import dataclass

THREADS_ENV = "BERMUDAN_FIXPOINT_THREADS"


@dataclass(frozen=True)
class RuntimeSettings:
    """Process-wide knobs that are not part of a job config."""

    threads: int = 1

    @classmethod
    def from_env(cls) -> RuntimeSettings:
        """Read settings from environment variables.

        ``BERMUDAN_FIXPOINT_THREADS`` sets the worker count of the cubature
        operator; unset, empty or invalid values fall back to one thread.
        """
        raw = os.environ.get(THREADS_ENV, "").strip()
        try:
            threads = int(raw) if raw else 1
        except ValueError:
            threads = 1
        return cls(threads=max(1, threads))
