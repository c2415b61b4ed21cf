"""Domain records and the two lifecycle state machines.

Records are frozen; the store hands out snapshots and writers replace rows
with ``evolve``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, fields
from typing import Optional

from goldgrid.goldbach.result import GoldbachRange, GoldbachResult


class WuState(enum.Enum):
    __hash__ = object.__hash__  # members are singletons; the default hashes the name in Python

    GENERATED = "GENERATED"
    IN_PROGRESS = "IN_PROGRESS"
    VALIDATED = "VALIDATED"
    ASSIMILATED = "ASSIMILATED"
    PURGED = "PURGED"
    ERROR = "ERROR"


class TaskState(enum.Enum):
    __hash__ = object.__hash__  # members are singletons; the default hashes the name in Python

    UNSENT = "UNSENT"
    SENT = "SENT"
    RETURNED = "RETURNED"
    TIMED_OUT = "TIMED_OUT"
    VALID = "VALID"
    INVALID = "INVALID"
    CANCELLED = "CANCELLED"


WU_EDGES = {
    WuState.GENERATED: {WuState.IN_PROGRESS},
    WuState.IN_PROGRESS: {WuState.VALIDATED, WuState.ERROR},
    WuState.VALIDATED: {WuState.ASSIMILATED},
    WuState.ASSIMILATED: {WuState.PURGED},
    WuState.PURGED: set(),
    WuState.ERROR: set(),
}

TASK_EDGES = {
    TaskState.UNSENT: {TaskState.SENT},
    TaskState.SENT: {TaskState.RETURNED, TaskState.TIMED_OUT, TaskState.CANCELLED},
    TaskState.RETURNED: {TaskState.VALID, TaskState.INVALID},
    TaskState.TIMED_OUT: set(),
    TaskState.VALID: set(),
    TaskState.INVALID: set(),
    TaskState.CANCELLED: set(),
}

PAYLOAD_STATES = frozenset({TaskState.RETURNED, TaskState.VALID, TaskState.INVALID})
CANONICAL_STATES = frozenset({WuState.VALIDATED, WuState.ASSIMILATED, WuState.PURGED})


def legal_wu(src: WuState, dst: WuState) -> bool:
    return dst in WU_EDGES[src]


def legal_task(src: TaskState, dst: TaskState) -> bool:
    return dst in TASK_EDGES[src]


class _Record:
    """Dict round-trip for the file store; enums by value, nested results by JSON."""

    def evolve(self, **changes):
        """Copy with ``changes`` applied; a cheaper ``dataclasses.replace`` for hot paths."""
        unknown = changes.keys() - self.__dict__.keys()
        if unknown:
            raise TypeError(f"unknown fields {sorted(unknown)}")
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.__dict__.update(changes)
        return new

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, GoldbachResult):
                v = v.to_json()
            elif isinstance(v, GoldbachRange):
                v = [v.start, v.end]
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict):
        kwargs = dict(d)
        for f in fields(cls):
            v = kwargs.get(f.name)
            if v is None:
                continue
            if f.type in ("WuState", "TaskState"):
                kwargs[f.name] = WuState(v) if f.type == "WuState" else TaskState(v)
            elif f.type in ("GoldbachResult", "Optional[GoldbachResult]"):
                kwargs[f.name] = GoldbachResult.from_json(v)
            elif f.type == "GoldbachRange":
                kwargs[f.name] = GoldbachRange(*v)
        return cls(**kwargs)


@dataclass(frozen=True)
class WorkUnit(_Record):
    """One even range plus its replication policy.

    ``transition_time`` is when the transitioner next needs to look at the
    unit (a result arrived, a deadline passes); None means never.
    ``flagged`` marks the unit for the validator. ``disagreement`` is set by
    the validator when no quorum formed. ``checked_received`` counts results
    received as of the last failed validation, so the transitioner only
    re-flags once something new has arrived.
    """

    wu_id: int
    range_start: int
    range_end: int
    target_replication: int = 2
    quorum: int = 2
    max_total_instances: int = 8
    deadline_delay: float = 3600.0
    state: WuState = WuState.GENERATED
    created_at: float = 0.0
    canonical_result_id: Optional[int] = None
    flagged: bool = False
    disagreement: bool = False
    checked_received: int = 0
    transition_time: Optional[float] = None
    assimilated_at: Optional[float] = None

    @property
    def range(self) -> GoldbachRange:
        return GoldbachRange(self.range_start, self.range_end)

    def check(self) -> None:
        assert self.range_start % 2 == 0 and self.range_end % 2 == 0
        assert 4 <= self.range_start <= self.range_end
        assert 1 <= self.quorum <= self.target_replication <= self.max_total_instances
        assert (self.canonical_result_id is not None) == (self.state in CANONICAL_STATES)


@dataclass(frozen=True)
class TaskInstance(_Record):
    task_id: int
    wu_id: int
    host_id: Optional[int] = None
    state: TaskState = TaskState.UNSENT
    sent_at: Optional[float] = None
    deadline: Optional[float] = None
    received_at: Optional[float] = None
    payload: Optional[GoldbachResult] = None
    credit_granted: int = 0

    def check(self) -> None:
        assert (self.payload is not None) == (self.state in PAYLOAD_STATES)
        assert self.credit_granted >= 0
        assert self.credit_granted == 0 or self.state is TaskState.VALID


@dataclass(frozen=True)
class HostRecord(_Record):
    host_id: int
    user_id: int
    ram_bytes: int
    free_disk_bytes: int
    cpu_class: int
    registered_at: float
    tasks_in_progress: int = 0


@dataclass(frozen=True)
class UserRecord(_Record):
    """A volunteer. ``purged_credit`` holds credit from task rows removed by cleanup."""

    user_id: int
    display_name: str
    registered_at: float
    credit_total: int = 0
    purged_credit: int = 0


@dataclass(frozen=True)
class ScienceArchiveRecord(_Record):
    wu_id: int
    range: GoldbachRange
    result: GoldbachResult
    validated_at: float
    canonical_task_id: Optional[int] = None


TABLE_TYPES = {
    "workunits": WorkUnit,
    "tasks": TaskInstance,
    "hosts": HostRecord,
    "users": UserRecord,
    "science_archive": ScienceArchiveRecord,
}

TABLE_KEYS = {
    "workunits": "wu_id",
    "tasks": "task_id",
    "hosts": "host_id",
    "users": "user_id",
    "science_archive": "wu_id",
}


def row_key(table: str, row) -> int:
    return getattr(row, TABLE_KEYS[table])
