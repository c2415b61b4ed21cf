"""Simulation inputs: configuration, events, host behaviors and availability."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Optional

from goldgrid.errors import InvalidArgument

DAY = 86400.0
HOUR = 3600.0

# Virtual seconds one task of the default width takes on one slot, per cpu_class.
DEFAULT_COMPUTE_SECONDS = {1: 3000.0, 2: 2400.0, 3: 2000.0, 4: 1700.0, 5: 1500.0}


_EPS = 1e-6  # seconds; absorbs float error at window edges


class EventKind(enum.IntEnum):
    USER_ARRIVAL = 0
    HOST_ARRIVAL = 1
    WORK_REQUEST = 2
    RESULT_RETURN = 3
    DROPOUT = 4
    DAEMON_TICK = 5


@dataclass(frozen=True, order=True)
class SimEvent:
    """Queue entry; ordering by (at, seq) gives time then insertion order."""

    at: float
    seq: int
    kind: EventKind = field(compare=False)
    subject: int = field(compare=False, default=0)
    data: Optional[tuple] = field(compare=False, default=None)


class Behavior(enum.Enum):
    HONEST = "honest"
    SLOW = "slow"
    DROPOUT = "dropout"
    CHEATER = "cheater"


@dataclass(frozen=True)
class BehaviorModel:
    kind: Behavior = Behavior.HONEST
    factor: float = 1.0

    def __post_init__(self):
        if self.factor < 1.0:
            raise InvalidArgument("slow factor must be >= 1")

    @property
    def returns_results(self) -> bool:
        return self.kind is not Behavior.DROPOUT

    @property
    def compute_factor(self) -> float:
        return self.factor if self.kind is Behavior.SLOW else 1.0


@dataclass(frozen=True)
class Availability:
    """A daily online window ``[phase, phase + hours)`` in seconds of the day.

    Computation only progresses while the host is online.
    """

    phase: float = 0.0
    hours: float = 24.0

    @property
    def always(self) -> bool:
        return self.hours >= 24.0

    @property
    def _span(self) -> float:
        return self.hours * HOUR

    def _offset(self, t: float) -> float:
        # a window start computed in floats can land a rounding error short of it
        off = (t - self.phase) % DAY
        return 0.0 if DAY - off < _EPS else off

    def online(self, t: float) -> bool:
        return self.always or self._offset(t) < self._span

    def next_online(self, t: float) -> float:
        if self.online(t):
            return t
        return t + DAY - self._offset(t)

    def remaining(self, t: float) -> float:
        """Online seconds left in the current window (0 when offline)."""
        if self.always:
            return float("inf")
        return max(0.0, self._span - self._offset(t))

    def next_window(self, t: float) -> float:
        """Start of the first window opening strictly after ``t``."""
        return t + DAY - self._offset(t)

    def advance(self, t: float, work: float) -> float:
        """Wall time at which ``work`` online seconds have elapsed from ``t``."""
        if self.always:
            return t + work
        t = self.next_online(t)
        left_today = self._span - self._offset(t)
        if work <= left_today + _EPS:
            return t + min(work, left_today)
        work -= left_today
        t += left_today + DAY - self._span
        full, rest = divmod(work, self._span)
        if rest < _EPS:
            return t + (full - 1) * DAY + self._span
        return t + full * DAY + rest


@dataclass(frozen=True)
class SimConfig:
    """Everything a run depends on; the trace is a pure function of this.

    ``availability`` is "always", "spread" (each host gets a random daily
    window of ``hours_per_day``) or "single" (every host shares the window
    starting at midnight). ``range_limit`` caps the searched interval, which
    keeps oracle audits cheap.
    """

    seed: int = 0
    days: int = 10
    users_per_day: float = 1.5
    hosts_per_day: float = 2.0
    initial_users: int = 1
    initial_hosts: int = 0
    dropout_frac: float = 0.0
    cheater_frac: float = 0.0
    slow_frac: float = 0.0
    slow_factor: float = 2.0
    compute_seconds: Dict[int, float] = field(default_factory=lambda: dict(DEFAULT_COMPUTE_SECONDS))
    compute_jitter: float = 0.2
    flops_per_even: float = 1000.0
    range_width_evens: int = 1000
    range_limit: Optional[int] = None
    quorum: int = 2
    target_replication: int = 2
    max_total_instances: int = 8
    deadline: float = HOUR
    retention: float = 600.0
    per_host_task_cap: int = 4
    unsent_buffer_target: int = 40
    availability: str = "always"
    hours_per_day: float = 12.0
    latency_range: tuple = (0.05, 0.5)

    def __post_init__(self):
        fracs = (self.dropout_frac, self.cheater_frac, self.slow_frac)
        if any(not 0.0 <= f <= 1.0 for f in fracs) or sum(fracs) > 1.0 + 1e-12:
            raise InvalidArgument("fault fractions must lie in [0, 1] and sum to at most 1")
        if self.days < 1:
            raise InvalidArgument("days must be >= 1")
        if self.users_per_day < 0 or self.hosts_per_day < 0:
            raise InvalidArgument("arrival rates must be >= 0")
        if self.initial_users < 1 and (self.initial_hosts or self.hosts_per_day):
            raise InvalidArgument("hosts need at least one initial user to belong to")
        if self.availability not in ("always", "spread", "single"):
            raise InvalidArgument(f"unknown availability mode {self.availability!r}")
        if not 0 < self.hours_per_day <= 24:
            raise InvalidArgument("hours_per_day must lie in (0, 24]")
        if not 0 <= self.compute_jitter < 1:
            raise InvalidArgument("compute_jitter must lie in [0, 1)")
        if sorted(self.compute_seconds) != [1, 2, 3, 4, 5] or min(self.compute_seconds.values()) <= 0:
            raise InvalidArgument("compute_seconds needs a positive time for cpu classes 1..5")
        lo, hi = self.latency_range
        if not 0 <= lo <= hi:
            raise InvalidArgument("latency_range must be an ordered pair of non-negative seconds")

    @property
    def horizon(self) -> float:
        return self.days * DAY

    def compute_time(self, cpu_class: int) -> float:
        return self.compute_seconds[cpu_class] * self.range_width_evens / 1000.0
