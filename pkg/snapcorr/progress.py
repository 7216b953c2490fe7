"""Progress and diagnostic output on stderr."""

from __future__ import annotations

import sys
import threading

_quiet = False


def set_quiet(quiet: bool) -> None:
    """Silence (or re-enable) all progress output."""
    global _quiet  # pylint: disable=global-statement
    _quiet = quiet


def note(message: str) -> None:
    """Print a diagnostic line to stderr unless quiet."""
    if not _quiet:
        print(message, file=sys.stderr)


class Progress:
    """Thread-safe ``[i/total] label...`` counter."""

    def __init__(self, total: int) -> None:
        self.total = total
        self._count = 0
        self._lock = threading.Lock()

    def step(self, label: str) -> None:
        """Advance the counter and print *label*."""
        with self._lock:
            self._count += 1
            note(f"[{self._count}/{self.total}] {label}...")

    @property
    def count(self) -> int:
        """Number of steps taken so far."""
        return self._count
