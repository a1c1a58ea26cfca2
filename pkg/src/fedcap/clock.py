"""Injectable clocks.  Every service reads time through one of these."""

from __future__ import annotations

import threading
import time


class Clock:
    """Wall clock in integer Unix seconds, shiftable by an offset.

    Services expose the offset over an admin endpoint so a harness can move
    every process forward in time without waiting.
    """

    def __init__(self, offset: int = 0):
        self._offset = offset
        self._lock = threading.Lock()

    def now(self) -> int:
        return int(time.time()) + self._offset

    def advance(self, seconds: int) -> int:
        with self._lock:
            self._offset += int(seconds)
        return self.now()

    def set(self, when: int) -> int:
        with self._lock:
            self._offset = int(when) - int(time.time())
        return self.now()


class ManualClock(Clock):
    """Frozen clock for tests; only moves when told to."""

    def __init__(self, start: int = 1_700_000_000):
        super().__init__()
        self._now = start

    def now(self) -> int:
        return self._now

    def advance(self, seconds: int) -> int:
        with self._lock:
            self._now += int(seconds)
        return self._now

    def set(self, when: int) -> int:
        with self._lock:
            self._now = int(when)
        return self._now
