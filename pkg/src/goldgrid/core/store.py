"""Transactional table store.

A transaction stages every write in an overlay and publishes all of them at
commit under the store lock; an exception anywhere inside the ``with`` block
discards the overlay. Transactions are serialized, which makes each
read-check-write sequence a compare-and-set.

Secondary indexes: equality indexes (``select(table, field=value)``) and
sorted indexes over optional numeric fields (``select_due``), so daemons
only visit rows that need attention.
"""
from __future__ import annotations

import bisect
import threading
from collections import defaultdict
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional

from goldgrid.core.types import TABLE_TYPES, row_key
from goldgrid.errors import NotFound, StoreError, TransactionAborted

TABLES = tuple(TABLE_TYPES)
_DELETED = object()

EQ_INDEXES = {
    "workunits": ("state", "flagged"),
    "tasks": ("state", "wu_id"),
}
SORTED_INDEXES = {
    "workunits": ("transition_time", "assimilated_at"),
}
_HISTORY_TABLES = ("workunits", "tasks")


class Txn:
    def __init__(self, store: "MemoryStore", read_only: bool = False):
        self._store = store
        self._read_only = read_only
        self._writes: Dict[str, Dict[int, Any]] = {}
        self._meta: Dict[str, Any] = {}
        self.writes = 0

    # reads
    def get(self, table: str, key: int):
        staged = self._writes.get(table)
        if staged:
            row = staged.get(key)
            if row is _DELETED:
                return None
            if row is not None:
                return row
        return self._store._tables[table].get(key)

    def require(self, table: str, key: int):
        row = self.get(table, key)
        if row is None:
            raise NotFound(table, key)
        return row

    def _scan(self, table: str, candidates, filters: dict) -> Iterator:
        staged = self._writes.get(table)
        base = self._store._tables[table]
        if staged:
            candidates = set(candidates)
            candidates.update(staged)
        items = tuple(filters.items())
        for key in sorted(candidates):
            row = staged.get(key) if staged else None
            if row is None:
                row = base.get(key)
            elif row is _DELETED:
                continue
            if row is None:
                continue
            for f, v in items:
                if getattr(row, f) != v:
                    break
            else:
                yield row

    def _candidates(self, table: str, filters: dict):
        store = self._store
        for field in EQ_INDEXES.get(table, ()):
            if field in filters:
                return store._eq[table][field].get(filters[field], ())
        return store._tables[table]

    def scan(self, table: str, **filters) -> Iterator:
        """Lazy ``select``: matching rows in key order, for early exits."""
        return self._scan(table, self._candidates(table, filters), filters)

    def select(self, table: str, **filters) -> List:
        """Rows of ``table`` whose fields equal ``filters``, ordered by key."""
        return list(self._scan(table, self._candidates(table, filters), filters))

    def select_due(self, table: str, field: str, upto: float, **filters) -> List:
        """Rows whose ``field`` is set and <= ``upto``, ordered by key."""
        entries = self._store._sorted[table][field]
        hi = bisect.bisect_right(entries, (upto, float("inf")))
        rows = self._scan(table, [k for _, k in entries[:hi]], filters)
        return [r for r in rows if getattr(r, field) is not None and getattr(r, field) <= upto]

    def count(self, table: str, **filters) -> int:
        if not self._writes.get(table):
            if not filters:
                return len(self._store._tables[table])
            if len(filters) == 1:
                (field, value), = filters.items()
                if field in EQ_INDEXES.get(table, ()):
                    return len(self._store._eq[table][field].get(value, ()))
        return len(self.select(table, **filters))

    def meta(self, key: str, default=None):
        if key in self._meta:
            return self._meta[key]
        return self._store._meta.get(key, default)

    # writes
    def _check_writable(self):
        if self._read_only:
            raise StoreError("read-only view")
        self.writes += 1
        self._store._before_write(self)

    def put(self, table: str, row) -> None:
        self._check_writable()
        self._writes.setdefault(table, {})[row_key(table, row)] = row

    def delete(self, table: str, key: int) -> None:
        self._check_writable()
        self._writes.setdefault(table, {})[key] = _DELETED

    def set_meta(self, key: str, value) -> None:
        self._check_writable()
        self._meta[key] = value

    def new_id(self) -> int:
        nid = self.meta("next_id", 1)
        self.set_meta("next_id", nid + 1)
        return nid


class MemoryStore:
    """In-memory store used by the simulator and the tests."""

    def __init__(self, record_history: bool = False):
        self._tables: Dict[str, Dict[int, Any]] = {t: {} for t in TABLES}
        self._meta: Dict[str, Any] = {}
        self._eq = {t: {f: defaultdict(set) for f in fs} for t, fs in EQ_INDEXES.items()}
        self._sorted = {t: {f: [] for f in fs} for t, fs in SORTED_INDEXES.items()}
        self._lock = threading.RLock()
        self.history: Optional[list] = [] if record_history else None

    @contextmanager
    def transaction(self) -> Iterator[Txn]:
        with self._lock:
            txn = Txn(self)
            yield txn
            self._commit(txn)

    @contextmanager
    def view(self) -> Iterator[Txn]:
        """Consistent read-only snapshot for stats and audits."""
        with self._lock:
            yield Txn(self, read_only=True)

    def _before_write(self, txn: Txn) -> None:
        pass

    def _commit(self, txn: Txn) -> None:
        self._apply(txn._writes, txn._meta)

    def _unindex(self, table, key, row):
        for field, idx in self._eq.get(table, {}).items():
            value = getattr(row, field)
            bucket = idx.get(value)
            if bucket is not None:
                bucket.discard(key)
                if not bucket:
                    del idx[value]
        for field, entries in self._sorted.get(table, {}).items():
            value = getattr(row, field)
            if value is not None:
                i = bisect.bisect_left(entries, (value, key))
                if i < len(entries) and entries[i] == (value, key):
                    del entries[i]

    def _index(self, table, key, row):
        for field, idx in self._eq.get(table, {}).items():
            idx[getattr(row, field)].add(key)
        for field, entries in self._sorted.get(table, {}).items():
            value = getattr(row, field)
            if value is not None:
                bisect.insort(entries, (value, key))

    def _apply(self, writes: Dict[str, Dict[int, Any]], meta: Dict[str, Any]) -> None:
        for table, rows in writes.items():
            base = self._tables[table]
            for key, row in rows.items():
                old = base.get(key)
                if self.history is not None and table in _HISTORY_TABLES:
                    self.history.append(
                        (table, key, None if old is None else old.state, None if row is _DELETED else row.state)
                    )
                if old is not None:
                    self._unindex(table, key, old)
                if row is _DELETED:
                    base.pop(key, None)
                    continue
                base[key] = row
                self._index(table, key, row)
        self._meta.update(meta)

    def close(self) -> None:
        pass


class AbortInjectingStore(MemoryStore):
    """Raises TransactionAborted on the ``fail_at``-th write of a transaction."""

    def __init__(self, fail_at: int, **kw):
        super().__init__(**kw)
        self.fail_at = fail_at
        self.armed = True

    def _before_write(self, txn: Txn) -> None:
        if self.armed and txn.writes == self.fail_at:
            raise TransactionAborted(f"injected crash at write {self.fail_at}")
