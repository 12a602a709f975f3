"""Finite partitions of the state space used for binned distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..model.state import SystemState

SCHEMES = ("by-count", "by-count-and-mean-elapsed")


@dataclass(frozen=True)
class StateBinner:
    """Map states to tags: ``n`` alone, or ``(n, b)`` with ``b`` the bin of the
    mean elapsed time (width ``width``, bins capped at index ``cap``)."""

    scheme: str = "by-count"
    width: float = 1.0
    cap: int = 10

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown binning scheme {self.scheme!r}")
        if not (self.width > 0 and self.cap >= 0):
            raise ValueError("bin width must be positive and cap nonnegative")

    def _bin(self, mean: float) -> int:
        return min(int(mean // self.width), self.cap)

    def tag(self, x: SystemState):
        if self.scheme == "by-count":
            return x.n
        if x.n == 0:
            return (0, 0)
        return (x.n, self._bin(math.fsum(x.elapsed) / x.n))

    def split(self, x: SystemState, dt: float):
        """``(tag, duration)`` pieces of the drift of ``x`` over ``[0, dt]``."""
        if self.scheme == "by-count" or x.n == 0:
            return ((self.tag(x), dt),)
        mean = math.fsum(x.elapsed) / x.n
        out = []
        t = 0.0
        while t < dt:
            b = self._bin(mean + t)
            if b >= self.cap:
                out.append(((x.n, b), dt - t))
                break
            t_next = min(dt, (b + 1) * self.width - mean)
            if t_next <= t:  # rounding at a bin edge
                t_next = min(dt, t + 1e-12 * max(1.0, t))
            out.append(((x.n, b), t_next - t))
            t = t_next
        return out
