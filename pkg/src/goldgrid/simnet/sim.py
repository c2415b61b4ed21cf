"""Deterministic discrete-event run of the real server against simulated hosts.

Daemon ticks fall on whole virtual seconds. Instead of ticking every second
of a 30-day run, a tick is queued for the next whole second after anything
that changes server state, again after any tick that did something, and at
every task deadline and retention expiry. The skipped ticks would have been
no-ops, so the outcome is the same as ticking every second.

Idle hosts are parked and re-sent to the scheduler after a tick that made
new work available, which matches polling every tick without the events.
"""
from __future__ import annotations

import heapq
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

from goldgrid.core import MemoryStore, VirtualClock
from goldgrid.core.lifecycle import user_credit_recomputed
from goldgrid.core.types import TaskState, WuState
from goldgrid.errors import NotFound
from goldgrid.goldbach import GoldbachRange, verify_range
from goldgrid.goldbach.result import MASK64
from goldgrid.server import ProjectServer, SchedulerConfig
from goldgrid.simnet.model import DAY, HOUR, Availability, Behavior, BehaviorModel, EventKind, SimConfig, SimEvent
from goldgrid.statcli.stats import daily_growth, export_csv, flops_from_counts

TRACE_COLUMNS = (
    "day",
    "new_users",
    "new_hosts",
    "tasks_returned",
    "units_assimilated",
    "est_flops",
    "task_table_rows",
    "archive_rows",
)


@dataclass
class DayRow:
    day: int
    new_users: int = 0
    new_hosts: int = 0
    tasks_returned: int = 0
    units_assimilated: int = 0
    est_flops: float = 0.0
    task_table_rows: int = 0
    archive_rows: int = 0

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in TRACE_COLUMNS)


@dataclass
class SimHost:
    host_id: int
    user_id: int
    cpu_class: int
    behavior: BehaviorModel
    latency: float
    window: Availability
    running: Dict[int, float] = field(default_factory=dict)
    gone: bool = False
    parked: bool = False
    request_pending: bool = False

    @property
    def slots(self) -> int:
        return self.cpu_class


@dataclass
class SimTrace:
    """What a run produced. ``days`` holds the CSV rows; the rest feeds audits."""

    config: SimConfig
    days: List[DayRow]
    arrivals: List[tuple]
    hourly_assimilated: List[int]
    hourly_task_rows: List[int]
    hourly_capacity: List[int]
    growth: list
    archive: List[tuple]
    unsound_assimilations: int
    honest_mismatches: int
    shared_host_pairs: int
    cheater_collisions: int
    credit_violations: int
    purge_credit_changes: int
    max_instances_seen: int
    units_over_replicated: int
    status: dict
    store: MemoryStore = field(repr=False)
    events_processed: int = 0

    def rows(self) -> List[tuple]:
        return [d.as_tuple() for d in self.days]

    def to_csv(self, path) -> None:
        export_csv(self.rows(), path, header=TRACE_COLUMNS)

    def arrivals_by_day(self) -> List[tuple]:
        """(day, users, hosts) from the simulator's own arrival log."""
        users, hosts = Counter(), Counter()
        for day, kind, _ in self.arrivals:
            (users if kind == "user" else hosts)[day] += 1
        return [(d, users[d], hosts[d]) for d in range(self.config.days)]


class _Sim:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        seed = cfg.seed
        self.rng_arrival = random.Random(f"{seed}:arrivals")
        self.rng_host = random.Random(f"{seed}:hosts")
        self.rng_work = random.Random(f"{seed}:work")
        self.rng_cheat = random.Random(f"{seed}:cheat")
        self.clock = VirtualClock()
        self.store = MemoryStore()
        self.server_config = SchedulerConfig(
            per_host_task_cap=cfg.per_host_task_cap,
            unsent_buffer_target=cfg.unsent_buffer_target,
            generator_range_width_evens=cfg.range_width_evens,
            retention_after_assimilation=cfg.retention,
            daemon_poll_interval=1.0,
            target_replication=cfg.target_replication,
            quorum=cfg.quorum,
            max_total_instances=cfg.max_total_instances,
            deadline_delay=cfg.deadline,
            range_limit=cfg.range_limit,
        )
        self.server = ProjectServer(self.store, self.clock, self.server_config)
        self.queue: List[SimEvent] = []
        self.seq = 0
        self.ticks_queued = set()
        self.hosts: Dict[int, SimHost] = {}
        self.users: List[int] = []
        self.parked: Dict[int, None] = {}
        self.honest: Dict[tuple, object] = {}
        self.replica_hosts: Dict[int, set] = defaultdict(set)
        self.wrong_payloads: Dict[int, set] = defaultdict(set)
        self.instances: Counter = Counter()

        self.days = [DayRow(d) for d in range(cfg.days)]
        self.arrivals: List[tuple] = []
        hours = cfg.days * 24
        self.hourly_assimilated = [0] * hours
        self.hourly_task_rows = [0] * hours
        self.hourly_capacity = [0] * hours
        self.validated_evens = [0] * cfg.days
        self.unsound = 0
        self.shared_pairs = 0
        self.collisions = 0
        self.credit_violations = 0
        self.purge_credit_changes = 0
        self.events = 0

    # queue
    def push(self, at: float, kind: EventKind, subject: int = 0, data=None) -> None:
        self.seq += 1
        heapq.heappush(self.queue, SimEvent(at, self.seq, kind, subject, data))

    def tick_at(self, at: float) -> None:
        at = float(math.floor(at) + 1)
        if at not in self.ticks_queued and at < self.cfg.horizon:
            self.ticks_queued.add(at)
            self.push(at, EventKind.DAEMON_TICK)

    def _day(self, t: float) -> int:
        return min(int(t // DAY), self.cfg.days - 1)

    def _hour(self, t: float) -> int:
        return min(int(t // HOUR), self.cfg.days * 24 - 1)

    # arrivals
    def _schedule_poisson(self, kind: EventKind, rate_per_day: float) -> None:
        if rate_per_day <= 0:
            return
        t = 0.0
        while True:
            t += self.rng_arrival.expovariate(rate_per_day / DAY)
            if t >= self.cfg.horizon:
                return
            self.push(t, kind)

    def _new_user(self) -> None:
        uid = self.server.register_user(f"user{len(self.users) + 1}")
        self.users.append(uid)
        now = self.clock.now()
        self.arrivals.append((self._day(now), "user", uid))
        self.days[self._day(now)].new_users += 1

    def _behavior(self) -> BehaviorModel:
        cfg = self.cfg
        u = self.rng_host.random()
        if u < cfg.dropout_frac:
            return BehaviorModel(Behavior.DROPOUT)
        u -= cfg.dropout_frac
        if u < cfg.cheater_frac:
            return BehaviorModel(Behavior.CHEATER)
        u -= cfg.cheater_frac
        if u < cfg.slow_frac:
            return BehaviorModel(Behavior.SLOW, cfg.slow_factor)
        return BehaviorModel()

    def _new_host(self) -> None:
        cfg, rng = self.cfg, self.rng_host
        user_id = self.users[rng.randrange(len(self.users))]
        cpu_class = rng.randint(1, 5)
        behavior = self._behavior()
        latency = rng.uniform(*cfg.latency_range)
        phase = rng.uniform(0.0, DAY)
        if cfg.availability == "always":
            window = Availability()
        elif cfg.availability == "spread":
            window = Availability(phase, cfg.hours_per_day)
        else:
            window = Availability(0.0, cfg.hours_per_day)
        ram = 2**30 * cpu_class
        host_id = self.server.add_host(user_id, ram, 10 * ram, cpu_class)
        host = SimHost(host_id, user_id, cpu_class, behavior, latency, window)
        self.hosts[host_id] = host
        now = self.clock.now()
        self.arrivals.append((self._day(now), "host", host_id))
        self.days[self._day(now)].new_hosts += 1
        self._request(host, now)

    # hosts
    def _request(self, host: SimHost, t: float) -> None:
        if host.gone or host.request_pending:
            return
        host.request_pending = True
        # like a deadline-aware client, only fetch when a task fits in today's window
        at = host.window.next_online(t)
        if host.window.remaining(at) < self._expected_work(host):
            at = host.window.next_window(at)
        self.push(at + host.latency, EventKind.WORK_REQUEST, host.host_id)

    def _expected_work(self, host: SimHost) -> float:
        return self.cfg.compute_time(host.cpu_class) * host.behavior.compute_factor

    def _park(self, host: SimHost) -> None:
        host.parked = True
        self.parked[host.host_id] = None

    def _on_request(self, host: SimHost, now: float) -> None:
        host.request_pending = False
        if host.gone:
            return
        free = min(host.slots, self.cfg.per_host_task_cap) - len(host.running)
        if free <= 0:
            return
        tasks = self.server.request_work(host.host_id, max_tasks=free)
        if tasks:
            self.tick_at(now)
        for task in tasks:
            tid = task["task_id"]
            self.tick_at(task["deadline_unix"])
            self._audit_send(host, tid)
            if not host.behavior.returns_results:
                continue
            base = self._expected_work(host)
            jitter = self.cfg.compute_jitter
            work = base * self.rng_work.uniform(1.0 - jitter, 1.0 + jitter)
            start = now + host.latency
            done = host.window.advance(start, work)
            host.running[tid] = done
            self.push(done + host.latency, EventKind.RESULT_RETURN, host.host_id, (tid, task["range_start"], task["range_end"]))
        if not host.behavior.returns_results:
            self.push(now, EventKind.DROPOUT, host.host_id)
            return
        if len(tasks) < free:
            self._park(host)
        elif host.parked:
            host.parked = False
            del self.parked[host.host_id]

    def _audit_send(self, host: SimHost, task_id: int) -> None:
        with self.store.view() as v:
            wu_id = v.require("tasks", task_id).wu_id
        if host.host_id in self.replica_hosts[wu_id]:
            self.shared_pairs += 1
        self.replica_hosts[wu_id].add(host.host_id)
        self.instances[wu_id] += 1

    def _payload(self, host: SimHost, start: int, end: int):
        key = (start, end)
        result = self.honest.get(key)
        if result is None:
            result = verify_range(GoldbachRange(start, end))
            self.honest[key] = result
        if host.behavior.kind is Behavior.CHEATER:
            delta = self.rng_cheat.randrange(1, 2**64)
            result = replace(result, checksum64=(result.checksum64 + delta) & MASK64)
        return result

    def _on_return(self, host: SimHost, data: tuple, now: float) -> None:
        tid, start, end = data
        host.running.pop(tid, None)
        if host.gone:
            return
        payload = self._payload(host, start, end)
        try:
            reply = self.server.report_result(tid, payload)
        except NotFound:
            reply = {"status": "rejected"}
        if reply["status"] == "ok":
            self.days[self._day(now)].tasks_returned += 1
            self.tick_at(now)
            if host.behavior.kind is Behavior.CHEATER:
                wu = self._wu_of(tid)
                if wu is not None:
                    if payload in self.wrong_payloads[wu]:
                        self.collisions += 1
                    self.wrong_payloads[wu].add(payload)
        self._request(host, now)

    def _wu_of(self, task_id: int) -> Optional[int]:
        with self.store.view() as v:
            t = v.get("tasks", task_id)
        return None if t is None else t.wu_id

    # daemons
    def _credit_totals(self) -> tuple:
        with self.store.view() as v:
            return tuple(u.credit_total for u in v.select("users"))

    def _on_tick(self, now: float) -> None:
        self.ticks_queued.discard(now)
        srv = self.server
        created = srv.run_work_generator()
        actions = srv.run_transitioner()
        validated, _ = srv.run_validator()
        archived = srv.run_assimilator()
        if archived:
            self._audit_assimilated(archived, now)
        with self.store.view() as v:
            expiring = v.select_due("workunits", "assimilated_at", now - self.cfg.retention)
        before = self._credit_totals() if expiring else None
        purged = srv.run_cleanup()
        if before is not None and self._credit_totals() != before:
            self.purge_credit_changes += 1

        if self._work_due(now + 1):
            self.tick_at(now)
        if archived:
            self.tick_at(now + self.cfg.retention)
        if created or actions.get("reissued"):
            for hid in list(self.parked):
                host = self.hosts[hid]
                host.parked = False
                del self.parked[hid]
                self._request(host, now)

    def _work_due(self, at: float) -> bool:
        """Whether a tick at ``at`` would find anything for a daemon to do."""
        with self.store.view() as v:
            return bool(
                v.select_due("workunits", "transition_time", at)
                or v.count("workunits", flagged=True)
                or v.count("workunits", state=WuState.VALIDATED)
            )

    def _audit_assimilated(self, wu_ids: List[int], now: float) -> None:
        day = self._day(now)
        with self.store.view() as v:
            for wu_id in wu_ids:
                wu = v.require("workunits", wu_id)
                record = v.require("science_archive", wu_id)
                agreeing = [
                    t
                    for t in v.select("tasks", wu_id=wu_id)
                    if t.state is TaskState.VALID and t.payload == record.result
                ]
                if len(agreeing) < wu.quorum or not record.result.is_consistent_with(record.range):
                    self.unsound += 1
                self.days[day].units_assimilated += 1
                self.hourly_assimilated[self._hour(now)] += 1
                self.validated_evens[day] += len(agreeing) * record.result.evens_checked

    def _audit_credit(self) -> None:
        with self.store.view() as v:
            recomputed = user_credit_recomputed(v)
            for u in v.select("users"):
                if recomputed[u.user_id] != u.credit_total:
                    self.credit_violations += 1

    # bookkeeping
    def _close_hours(self, upto: float) -> None:
        while self._next_hour <= upto and self._next_hour <= self.cfg.horizon:
            h = int(self._next_hour // HOUR) - 1
            with self.store.view() as v:
                self.hourly_task_rows[h] = v.count("tasks")
                self.hourly_capacity[h] = v.count("hosts") * self.cfg.per_host_task_cap
            if self._next_hour % DAY == 0:
                d = int(self._next_hour // DAY) - 1
                with self.store.view() as v:
                    self.days[d].task_table_rows = v.count("tasks")
                    self.days[d].archive_rows = v.count("science_archive")
                self.days[d].est_flops = flops_from_counts(self.validated_evens[d], self.cfg.flops_per_even, DAY)
                self._audit_credit()
            self._next_hour += HOUR

    def run(self) -> SimTrace:
        cfg = self.cfg
        for _ in range(cfg.initial_users):
            self._new_user()
        self._schedule_poisson(EventKind.USER_ARRIVAL, cfg.users_per_day)
        self._schedule_poisson(EventKind.HOST_ARRIVAL, cfg.hosts_per_day)
        self.server.run_work_generator()
        for _ in range(cfg.initial_hosts):
            self._new_host()
        self._next_hour = HOUR

        while self.queue:
            ev = heapq.heappop(self.queue)
            if ev.at >= cfg.horizon:
                break
            self._close_hours(ev.at)
            self.clock.set(ev.at)
            self.events += 1
            kind = ev.kind
            if kind is EventKind.DAEMON_TICK:
                self._on_tick(ev.at)
            elif kind is EventKind.WORK_REQUEST:
                self._on_request(self.hosts[ev.subject], ev.at)
            elif kind is EventKind.RESULT_RETURN:
                self._on_return(self.hosts[ev.subject], ev.data, ev.at)
            elif kind is EventKind.USER_ARRIVAL:
                self._new_user()
            elif kind is EventKind.HOST_ARRIVAL:
                self._new_host()
                self.tick_at(ev.at)
            elif kind is EventKind.DROPOUT:
                self.hosts[ev.subject].gone = True
        self._close_hours(cfg.horizon)
        return self._trace()

    def _trace(self) -> SimTrace:
        with self.store.view() as v:
            growth = daily_growth(v, epoch=0.0, days=self.cfg.days)
            archive = sorted((r.range.start, r.range.end, r.result) for r in v.select("science_archive"))
        return SimTrace(
            config=self.cfg,
            days=self.days,
            arrivals=self.arrivals,
            hourly_assimilated=self.hourly_assimilated,
            hourly_task_rows=self.hourly_task_rows,
            hourly_capacity=self.hourly_capacity,
            growth=growth,
            archive=archive,
            unsound_assimilations=self.unsound,
            honest_mismatches=sum(1 for s, e, r in archive if self.honest.get((s, e)) not in (None, r)),
            shared_host_pairs=self.shared_pairs,
            cheater_collisions=self.collisions,
            credit_violations=self.credit_violations,
            purge_credit_changes=self.purge_credit_changes,
            max_instances_seen=max(self.instances.values(), default=0),
            units_over_replicated=sum(1 for n in self.instances.values() if n > self.cfg.target_replication),
            status=self.server.status(),
            store=self.store,
            events_processed=self.events,
        )


def run_sim(config: SimConfig) -> SimTrace:
    """Run one seeded simulation; identical configs give identical traces."""
    return _Sim(config).run()
