import time


class RealClock:
    def now(self) -> float:
        return time.time()


class VirtualClock:
    """Manually advanced clock for simulations and tests."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def set(self, t: float) -> None:
        if t < self._now:
            raise ValueError(f"virtual time cannot go backwards ({t} < {self._now})")
        self._now = float(t)

    def advance(self, dt: float) -> None:
        self.set(self._now + dt)
