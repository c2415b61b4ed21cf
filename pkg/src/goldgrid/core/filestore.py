"""Durable store: append-only transaction log plus periodic snapshot.

On-disk layout under ``data_dir``::

    log.bin       sequence of records
    snapshot.bin  b"GGSNAP1\\n" followed by one record

Each record is ``<u32 length><u32 crc32>`` (little-endian) and ``length``
bytes of UTF-8 JSON. A log record holds one committed transaction::

    {"seq": 17, "w": [["tasks", 42, {...row...}], ["tasks", 43, null]], "m": {"next_id": 44}}

where a ``null`` row is a delete. The snapshot payload is
``{"seq": N, "tables": {name: [row, ...]}, "meta": {...}}`` and covers every
log record with ``seq <= N``. Rows use the ``to_dict`` form of the record
types. A torn or corrupt tail record is ignored on open, since it was never
acknowledged as committed.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

from goldgrid.core.store import _DELETED, TABLES, MemoryStore, Txn
from goldgrid.core.types import TABLE_KEYS, TABLE_TYPES
from goldgrid.errors import StoreError

_HEADER = struct.Struct("<II")
SNAPSHOT_MAGIC = b"GGSNAP1\n"


def encode_record(obj) -> bytes:
    payload = json.dumps(obj, separators=(",", ":"), sort_keys=True).encode("utf-8")
    return _HEADER.pack(len(payload), zlib.crc32(payload)) + payload


def decode_records(data: bytes):
    """Yield (end_offset, obj) for each intact record; stop at the first bad one."""
    pos = 0
    while pos + _HEADER.size <= len(data):
        length, crc = _HEADER.unpack_from(data, pos)
        start = pos + _HEADER.size
        payload = data[start : start + length]
        if len(payload) < length or zlib.crc32(payload) != crc:
            return
        pos = start + length
        yield pos, json.loads(payload)


class FileStore(MemoryStore):
    def __init__(self, data_dir, compact_every: int = 5000, durable: bool = False,
                 read_only: bool = False, **kw):
        super().__init__(**kw)
        self.read_only = read_only
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / "log.bin"
        self.snapshot_path = self.data_dir / "snapshot.bin"
        self.compact_every = compact_every
        self.durable = durable
        self._seq = 0
        self._since_snapshot = 0
        self._load()
        self._log = None if read_only else open(self.log_path, "ab")

    def _load(self) -> None:
        snap_seq = 0
        if self.snapshot_path.exists():
            data = self.snapshot_path.read_bytes()
            if not data.startswith(SNAPSHOT_MAGIC):
                raise StoreError(f"{self.snapshot_path} is not a snapshot file")
            records = list(decode_records(data[len(SNAPSHOT_MAGIC) :]))
            if not records:
                raise StoreError(f"{self.snapshot_path} is corrupt")
            snap = records[0][1]
            snap_seq = snap["seq"]
            writes = {
                t: {r[TABLE_KEYS[t]]: TABLE_TYPES[t].from_dict(r) for r in rows}
                for t, rows in snap["tables"].items()
            }
            self._apply(writes, snap["meta"])
        self._seq = snap_seq
        if self.log_path.exists():
            data = self.log_path.read_bytes()
            good = 0
            for end, rec in decode_records(data):
                good = end
                if rec["seq"] <= snap_seq:
                    continue
                self._apply(self._decode_writes(rec["w"]), rec["m"])
                self._seq = rec["seq"]
                self._since_snapshot += 1
            if good < len(data) and not self.read_only:
                with open(self.log_path, "r+b") as fh:
                    fh.truncate(good)

    @staticmethod
    def _decode_writes(items):
        writes = {t: {} for t in TABLES}
        for table, key, row in items:
            writes[table][key] = _DELETED if row is None else TABLE_TYPES[table].from_dict(row)
        return writes

    def _commit(self, txn: Txn) -> None:
        items = [
            [table, key, None if row is _DELETED else row.to_dict()]
            for table, rows in txn._writes.items()
            for key, row in rows.items()
        ]
        if not items and not txn._meta:
            return
        if self._log is None:
            raise StoreError("store opened read-only")
        self._seq += 1
        self._log.write(encode_record({"seq": self._seq, "w": items, "m": txn._meta}))
        self._log.flush()
        if self.durable:
            os.fsync(self._log.fileno())
        self._apply(txn._writes, txn._meta)
        self._since_snapshot += 1
        if self._since_snapshot >= self.compact_every:
            self.compact()

    def compact(self) -> None:
        """Write a snapshot of the current state and truncate the log."""
        if self._log is None:
            raise StoreError("store opened read-only")
        with self._lock:
            snap = {
                "seq": self._seq,
                "tables": {t: [r.to_dict() for _, r in sorted(self._tables[t].items())] for t in TABLES},
                "meta": self._meta,
            }
            tmp = self.snapshot_path.with_suffix(".tmp")
            with open(tmp, "wb") as fh:
                fh.write(SNAPSHOT_MAGIC + encode_record(snap))
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.snapshot_path)
            self._log.close()
            self._log = open(self.log_path, "wb")
            self._since_snapshot = 0

    def close(self) -> None:
        with self._lock:
            if self._log is not None and not self._log.closed:
                self._log.close()
