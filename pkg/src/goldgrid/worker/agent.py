"""Volunteer client: registration, checkpointed computation and reporting."""
from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from goldgrid.goldbach import Checkpoint, GoldbachRange, checkpoint_path, verify_range
from goldgrid.goldbach.result import MASK64
from goldgrid.worker.client import ServerClient, with_backoff

log = logging.getLogger(__name__)

HOST_ID_FILE = "host_id"
IDLE_POLL = 10.0


@dataclass(frozen=True)
class HostSpec:
    ram_bytes: int
    free_disk_bytes: int
    cpu_class: int

    def __post_init__(self):
        if min(self.ram_bytes, self.free_disk_bytes, self.cpu_class) <= 0:
            raise ValueError("host capabilities must be positive")


@dataclass(frozen=True)
class WorkerState:
    """What a worker holds locally: its id, server and in-flight tasks."""

    host_id: int
    server: str
    active: Tuple[Tuple[int, GoldbachRange, Path], ...]


class Killed(Exception):
    """Test hook: stands in for the process dying mid-computation."""


def register(client: ServerClient, spec: HostSpec, user_name: str, work_dir, **backoff) -> int:
    """Return the stored host id, registering (with retries) on first run."""
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    id_file = work_dir / HOST_ID_FILE
    if id_file.exists():
        return int(id_file.read_text().strip())
    reply = with_backoff(
        lambda: client.register_host(user_name, spec.ram_bytes, spec.free_disk_bytes, spec.cpu_class), **backoff
    )
    tmp = id_file.with_suffix(".tmp")
    tmp.write_text(str(reply["host_id"]))
    tmp.replace(id_file)
    return reply["host_id"]


class Worker:
    """Control loop plus ``cpu_class`` compute slots.

    ``behavior`` is for fault-injection tests: "cheat" flips the checksum of
    every result, "dropout" computes but never reports. ``kill_after`` makes
    every computation die after that many checkpoints, leaving its
    checkpoint file behind as a killed process would.
    """

    def __init__(
        self,
        client: ServerClient,
        work_dir,
        host_id: int,
        cpu_class: int = 1,
        task_cap: int = 4,
        checkpoint_every: int = 100_000,
        poll_interval: float = IDLE_POLL,
        behavior: str = "honest",
        kill_after: Optional[int] = None,
    ):
        self.client = client
        self.work_dir = Path(work_dir)
        self.host_id = host_id
        self.slots = max(1, min(cpu_class, task_cap))
        self.task_cap = task_cap
        self.checkpoint_every = checkpoint_every
        self.poll_interval = poll_interval
        self.behavior = behavior
        self.kill_after = kill_after
        self.stop_event = threading.Event()
        self.reported: Dict[int, dict] = {}

    # local state
    def pending_checkpoints(self) -> Dict[int, Path]:
        out = {}
        for path in self.work_dir.glob("task_*.ckpt"):
            try:
                out[int(path.stem.split("_", 1)[1])] = path
            except ValueError:
                continue
        return dict(sorted(out.items()))

    def state(self) -> WorkerState:
        active = []
        for tid, path in self.pending_checkpoints().items():
            active.append((tid, Checkpoint.load(path).range, path))
        return WorkerState(self.host_id, self.client.url, tuple(active))

    def _accept(self, task: dict) -> None:
        rng = GoldbachRange(task["range_start"], task["range_end"])
        Checkpoint.initial(rng).save(checkpoint_path(self.work_dir, task["task_id"]))

    def compute(self, task_id: int):
        path = checkpoint_path(self.work_dir, task_id)
        ckpt = Checkpoint.load(path)
        saved = 0

        def on_checkpoint(c):
            nonlocal saved
            c.save(path)
            saved += 1
            if self.kill_after is not None and saved >= self.kill_after:
                raise Killed(task_id)

        result = verify_range(ckpt.range, ckpt, self.checkpoint_every, on_checkpoint)
        if self.behavior == "cheat":
            result = replace(result, checksum64=(result.checksum64 ^ 0x5A5A5A5A) & MASK64)
        return result

    def _report(self, task_id: int, result) -> None:
        path = checkpoint_path(self.work_dir, task_id)
        if self.behavior == "dropout":
            path.unlink(missing_ok=True)
            return
        reply = with_backoff(lambda: self.client.report_result(task_id, result), stop=self.stop_event)
        self.reported[task_id] = reply
        if reply.get("status") != "ok":
            log.info("task %s rejected: %s", task_id, reply.get("reason"))
        path.unlink(missing_ok=True)

    def run(self, idle_exit: Optional[float] = None, max_tasks_total: Optional[int] = None) -> None:
        """Fetch, compute and report until stopped.

        Exits after ``idle_exit`` seconds without work, or once
        ``max_tasks_total`` results have been handled.
        """
        handled = 0
        idle_since = None
        with ThreadPoolExecutor(max_workers=self.slots, thread_name_prefix="slot") as pool:
            active = {pool.submit(self.compute, tid): tid for tid in self.pending_checkpoints()}
            while not self.stop_event.is_set():
                room = min(self.slots, self.task_cap) - len(active)
                if max_tasks_total is not None:
                    room = min(room, max_tasks_total - handled - len(active))
                got = []
                if room > 0:
                    got = with_backoff(
                        lambda: self.client.request_work(self.host_id, max_tasks=room), stop=self.stop_event
                    )
                    for task in got:
                        self._accept(task)
                        active[pool.submit(self.compute, task["task_id"])] = task["task_id"]
                if not active:
                    if max_tasks_total is not None and handled >= max_tasks_total:
                        return
                    now = time.monotonic()
                    idle_since = idle_since or now
                    if idle_exit is not None and now - idle_since >= idle_exit:
                        return
                    self.stop_event.wait(self.poll_interval)
                    continue
                idle_since = None
                done, _ = wait(list(active), timeout=self.poll_interval, return_when=FIRST_COMPLETED)
                for fut in done:
                    tid = active.pop(fut)
                    exc = fut.exception()
                    if isinstance(exc, Killed):
                        self.stop_event.set()
                        continue
                    if exc is not None:
                        raise exc
                    self._report(tid, fut.result())
                    handled += 1
