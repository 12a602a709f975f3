"""Elapsed-time state of the infinite-server process and its elementary moves."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class SystemState:
    """Point ``(n; x0; x1..xn)`` of the state space.

    ``x0`` is the time since the most recent arrival; ``elapsed`` holds the
    elapsed service times of the customers present. ``x0`` is kept as an
    independent clock that is reset only at arrivals.
    """

    x0: float = 0.0
    elapsed: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.elapsed, tuple):
            object.__setattr__(self, "elapsed", tuple(float(v) for v in self.elapsed))
        if self.x0 < 0 or any(v < 0 for v in self.elapsed):
            raise ValueError(f"negative coordinate in state {self!r}")

    @property
    def n(self) -> int:
        return len(self.elapsed)

    @property
    def empty(self) -> bool:
        return not self.elapsed

    @classmethod
    def regeneration(cls) -> "SystemState":
        """The state (1, 0, 0) entered by every arrival to the empty system."""
        return cls(0.0, (0.0,))


EMPTY = SystemState()


def advance(x: SystemState, dt: float) -> SystemState:
    """Deterministic drift: every clock grows by ``dt``."""
    if dt < 0:
        raise ValueError(f"cannot advance by negative time {dt}")
    if dt == 0:
        return x
    return SystemState(x.x0 + dt, tuple(v + dt for v in x.elapsed))


def apply_arrival(x: SystemState, slot: int) -> SystemState:
    """Insert a fresh customer (elapsed 0) at 1-based position ``slot``."""
    if not 1 <= slot <= x.n + 1:
        raise ValueError(f"arrival slot {slot} outside 1..{x.n + 1}")
    e = x.elapsed
    return SystemState(0.0, e[: slot - 1] + (0.0,) + e[slot - 1 :])


def apply_departure(x: SystemState, i: int) -> SystemState:
    """Remove customer ``i`` (1-based); ``x0`` is untouched."""
    if x.n == 0:
        raise ValueError("departure from the empty system")
    if not 1 <= i <= x.n:
        raise ValueError(f"departure index {i} outside 1..{x.n}")
    e = x.elapsed
    return SystemState(x.x0, e[: i - 1] + e[i:])
