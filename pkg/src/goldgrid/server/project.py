"""Project server facade: endpoint handlers and daemon entry points over one store."""
from __future__ import annotations

import logging
from collections import Counter
from typing import Optional

from goldgrid.core.clock import RealClock
from goldgrid.core.lifecycle import transition_task, transition_wu
from goldgrid.core.types import HostRecord, TaskState, UserRecord, WuState
from goldgrid.errors import InvalidArgument
from goldgrid.server import daemons
from goldgrid.server.config import SchedulerConfig

log = logging.getLogger(__name__)

DAEMON_ORDER = ("work_generator", "transitioner", "validator", "assimilator", "cleanup")


class ProjectServer:
    def __init__(self, store, clock=None, config: Optional[SchedulerConfig] = None):
        self.store = store
        self.clock = clock or RealClock()
        with store.transaction() as txn:
            if txn.meta("frontier") is None:
                txn.set_meta("frontier", 4)
                txn.set_meta("created_at", self.clock.now())
            if config is not None:
                txn.set_meta("config", config.to_dict())
            elif txn.meta("config") is None:
                txn.set_meta("config", SchedulerConfig().to_dict())
            self._config = SchedulerConfig.from_dict(txn.meta("config"))

    @property
    def config(self) -> SchedulerConfig:
        return self._config

    def set_config(self, key: str, value) -> SchedulerConfig:
        with self.store.transaction() as txn:
            cfg = SchedulerConfig.from_dict(txn.meta("config")).with_value(key, value)
            txn.set_meta("config", cfg.to_dict())
        self._config = cfg
        return cfg

    # scheduler endpoints
    def register_host(self, user_name: str, ram_bytes: int, free_disk_bytes: int, cpu_class: int):
        if not user_name:
            raise InvalidArgument("user_name is required")
        if min(ram_bytes, free_disk_bytes, cpu_class) <= 0:
            raise InvalidArgument("host capabilities must be positive")
        now = self.clock.now()
        with self.store.transaction() as txn:
            user = next((u for u in txn.select("users") if u.display_name == user_name), None)
            if user is None:
                user = UserRecord(user_id=txn.new_id(), display_name=user_name, registered_at=now)
                txn.put("users", user)
            host = HostRecord(
                host_id=txn.new_id(),
                user_id=user.user_id,
                ram_bytes=ram_bytes,
                free_disk_bytes=free_disk_bytes,
                cpu_class=cpu_class,
                registered_at=now,
            )
            txn.put("hosts", host)
        return host.host_id, user.user_id

    def register_user(self, user_name: str) -> int:
        now = self.clock.now()
        with self.store.transaction() as txn:
            user = UserRecord(user_id=txn.new_id(), display_name=user_name, registered_at=now)
            txn.put("users", user)
        return user.user_id

    def add_host(self, user_id: int, ram_bytes: int, free_disk_bytes: int, cpu_class: int) -> int:
        now = self.clock.now()
        with self.store.transaction() as txn:
            txn.require("users", user_id)
            host_id = txn.new_id()
            txn.put("hosts", HostRecord(host_id, user_id, ram_bytes, free_disk_bytes, cpu_class, now))
        return host_id

    def request_work(self, host_id: int, max_tasks: Optional[int] = None) -> list:
        cfg = self.config
        now = self.clock.now()
        with self.store.transaction() as txn:
            sent = daemons.assign_work(txn, host_id, cfg, now, max_tasks)
        return [
            {"task_id": tid, "range_start": rng.start, "range_end": rng.end, "deadline_unix": deadline}
            for tid, rng, deadline in sent
        ]

    def report_result(self, task_id: int, payload) -> dict:
        now = self.clock.now()
        with self.store.transaction() as txn:
            status, reason = daemons.report_result(txn, task_id, payload, now)
        out = {"status": status}
        if reason:
            out["reason"] = reason
        return out

    # daemons
    def run_work_generator(self):
        cfg = self.config
        with self.store.transaction() as txn:
            created, frontier = daemons.work_generator_step(txn, cfg, txn.meta("frontier"), self.clock.now())
            if created:
                txn.set_meta("frontier", frontier)
        return created

    def run_transitioner(self):
        cfg = self.config
        with self.store.transaction() as txn:
            return daemons.transitioner_step(txn, self.clock.now(), cfg)

    def run_validator(self):
        cfg = self.config
        with self.store.transaction() as txn:
            return daemons.validator_step(txn, cfg, self.clock.now())

    def run_assimilator(self):
        with self.store.transaction() as txn:
            return daemons.assimilator_step(txn, self.clock.now())

    def run_cleanup(self):
        cfg = self.config
        with self.store.transaction() as txn:
            return daemons.cleanup_step(txn, self.clock.now(), cfg)

    def daemon(self, name: str):
        return getattr(self, f"run_{name}")

    def tick(self) -> dict:
        """Run each daemon once, in pipeline order. Returns what each one did."""
        return {name: self.daemon(name)() for name in DAEMON_ORDER}

    # admin
    def cancel_wu(self, wu_id: int) -> int:
        """Cancel every outstanding replica of a unit and retire it as ERROR."""
        cancelled = 0
        with self.store.transaction() as txn:
            wu = txn.require("workunits", wu_id)
            for t in txn.select("tasks", wu_id=wu_id):
                if t.state is TaskState.SENT:
                    transition_task(txn, t.task_id, TaskState.SENT, TaskState.CANCELLED)
                    daemons._adjust_host(txn, t.host_id, -1)
                    cancelled += 1
                elif t.state is TaskState.UNSENT:
                    txn.delete("tasks", t.task_id)
                elif t.state is TaskState.RETURNED:
                    transition_task(txn, t.task_id, TaskState.RETURNED, TaskState.INVALID)
            if wu.state is WuState.GENERATED:
                transition_wu(txn, wu_id, WuState.GENERATED, WuState.IN_PROGRESS)
            transition_wu(txn, wu_id, WuState.IN_PROGRESS, WuState.ERROR, flagged=False, disagreement=False)
        return cancelled

    def status(self) -> dict:
        with self.store.view() as v:
            return status_counts(v)

    def stats(self) -> dict:
        from goldgrid.statcli.stats import server_stats

        with self.store.view() as v:
            return server_stats(v, self.clock.now(), self.config)


def status_counts(view) -> dict:
    units = Counter(wu.state.value for wu in view.select("workunits"))
    tasks = Counter(t.state.value for t in view.select("tasks"))
    return {
        "frontier": view.meta("frontier"),
        "units_by_state": {s.value: units.get(s.value, 0) for s in WuState},
        "tasks_by_state": {s.value: tasks.get(s.value, 0) for s in TaskState},
    }
