"""Domain types, lifecycle state machines and the transactional store."""
from goldgrid.core.clock import RealClock, VirtualClock
from goldgrid.core.filestore import FileStore
from goldgrid.core.lifecycle import audit_credit, transition_task, transition_wu
from goldgrid.core.store import AbortInjectingStore, MemoryStore, Txn
from goldgrid.core.types import (
    HostRecord,
    ScienceArchiveRecord,
    TaskInstance,
    TaskState,
    UserRecord,
    WorkUnit,
    WuState,
)

__all__ = [
    "AbortInjectingStore",
    "FileStore",
    "HostRecord",
    "MemoryStore",
    "RealClock",
    "ScienceArchiveRecord",
    "TaskInstance",
    "TaskState",
    "Txn",
    "UserRecord",
    "VirtualClock",
    "WorkUnit",
    "WuState",
    "audit_credit",
    "transition_task",
    "transition_wu",
]
