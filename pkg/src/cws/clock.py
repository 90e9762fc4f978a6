"""Millisecond clocks: one manual virtual clock for simulation, one paced
clock that tracks wall time for the live HTTP service."""

from __future__ import annotations

import time


class VirtualClock:
    """Integer-millisecond clock moved only by the simulator."""

    def __init__(self, start_ms: int = 0):
        self._now = int(start_ms)

    def now_ms(self) -> int:
        return self._now

    def advance_to(self, t_ms: int) -> None:
        if t_ms < self._now:
            raise ValueError(f"clock cannot go backwards ({t_ms} < {self._now})")
        self._now = int(t_ms)


class PacedClock(VirtualClock):
    """Virtual time that also flows with the wall clock.

    ``scale`` virtual milliseconds elapse per wall millisecond. Event
    processing may push the clock ahead of wall time, never behind it.
    """

    def __init__(self, scale: float = 1.0, start_ms: int = 0):
        super().__init__(start_ms)
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = scale
        self._origin = time.monotonic()

    def now_ms(self) -> int:
        wall = int((time.monotonic() - self._origin) * 1000 * self.scale)
        if wall > self._now:
            self._now = wall
        return self._now

    def advance_to(self, t_ms: int) -> None:
        self._now = max(self.now_ms(), int(t_ms))
