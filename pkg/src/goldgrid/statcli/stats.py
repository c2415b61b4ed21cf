"""Throughput estimation, registration growth and CSV export."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import List, Optional, Sequence

from goldgrid.core.types import TaskState
from goldgrid.errors import InvalidArgument, IoError

DAY = 86400.0
FLOPS_PER_EVEN = 1000.0


@dataclass(frozen=True)
class ThroughputEstimate:
    window_start: float
    window_end: float
    tasks_validated: int
    evens_validated: int
    est_flops: float


@dataclass(frozen=True)
class DailyGrowth:
    day: int
    new_users: int
    new_hosts: int


def flops_from_counts(evens: int, flops_per_even: float, seconds: float) -> float:
    """Returned work times the assumed cost per unit of work, per second."""
    if seconds <= 0:
        raise InvalidArgument("window must have positive length")
    return evens * flops_per_even / seconds


def estimate_throughput(view, window_start: float, window_end: float,
                        flops_per_even: float = FLOPS_PER_EVEN) -> ThroughputEstimate:
    """Estimate platform speed from VALID results received in [start, end)."""
    if not window_end > window_start:
        raise InvalidArgument(f"empty window [{window_start}, {window_end})")
    tasks = evens = 0
    for t in view.select("tasks", state=TaskState.VALID):
        if t.received_at is not None and window_start <= t.received_at < window_end:
            tasks += 1
            evens += t.payload.evens_checked
    return ThroughputEstimate(
        window_start,
        window_end,
        tasks,
        evens,
        flops_from_counts(evens, flops_per_even, window_end - window_start),
    )


def daily_growth(view, epoch: Optional[float] = None, days: Optional[int] = None) -> List[DailyGrowth]:
    """Per-day counts of new users and hosts, from day 0 to the last active day.

    Days are counted from ``epoch`` (default: the project's creation time).
    With ``days`` the list always has exactly that many entries.
    """
    if epoch is None:
        epoch = view.meta("created_at", 0.0) or 0.0
    users = [math.floor((u.registered_at - epoch) / DAY) for u in view.select("users")]
    hosts = [math.floor((h.registered_at - epoch) / DAY) for h in view.select("hosts")]
    if days is None:
        if not users and not hosts:
            return []
        days = max(users + hosts) + 1
    out = []
    for d in range(days):
        out.append(DailyGrowth(d, users.count(d), hosts.count(d)))
    return out


def server_stats(view, now: float, config) -> dict:
    from goldgrid.server.project import status_counts

    counts = status_counts(view)
    window = config.stats_window
    est = estimate_throughput(view, now - window, now)
    return {
        "users_total": view.count("users"),
        "hosts_total": view.count("hosts"),
        "units_by_state": counts["units_by_state"],
        "tasks_by_state": counts["tasks_by_state"],
        "est_flops_last_window": est.est_flops,
    }


def export_csv(rows: Sequence, path, header: Optional[Sequence[str]] = None, row_type=None) -> Path:
    """Write dataclass rows as CSV with a header line (CRLF line endings).

    ``header`` defaults to the field names of ``row_type`` or of the first row.
    """
    if header is None:
        source = row_type or (type(rows[0]) if rows else None)
        if source is None:
            raise InvalidArgument("need a header or a row type to export an empty table")
        header = [f.name for f in fields(source)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(astuple(row) if hasattr(row, "__dataclass_fields__") else row)
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path, row_type=None) -> list:
    """Parse a file written by export_csv; converts fields back when ``row_type`` is given."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        raw = list(reader)
    if row_type is None:
        return [dict(zip(header, r)) for r in raw]
    types = {f.name: f.type for f in fields(row_type)}
    conv = {"int": int, "float": float, "str": str}
    return [row_type(**{h: conv[types[h]](v) for h, v in zip(header, r)}) for r in raw]
