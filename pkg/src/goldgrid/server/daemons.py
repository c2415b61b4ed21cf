"""Scheduler operations and the five server daemons.

Every function here works inside a caller-supplied transaction and keeps no
state between calls, so the daemons can run interleaved in threads or
strictly round-robin in the simulator.
"""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Dict, List, Optional, Tuple

from goldgrid.core.lifecycle import transition_task, transition_wu
from goldgrid.core.store import Txn
from goldgrid.core.types import (
    PAYLOAD_STATES,
    HostRecord,
    ScienceArchiveRecord,
    TaskInstance,
    TaskState,
    WorkUnit,
    WuState,
)
from goldgrid.errors import InvalidPayload
from goldgrid.goldbach.result import GoldbachRange, GoldbachResult
from goldgrid.server.config import SchedulerConfig

OK = "ok"
REJECTED = "rejected"


def _adjust_host(txn: Txn, host_id: int, delta: int) -> None:
    host = txn.get("hosts", host_id)
    if host is not None:
        txn.put("hosts", host.evolve(tasks_in_progress=max(0, host.tasks_in_progress + delta)))


def _new_task(txn: Txn, wu_id: int) -> TaskInstance:
    task = TaskInstance(task_id=txn.new_id(), wu_id=wu_id)
    txn.put("tasks", task)
    return task


def unsent_buffer(txn: Txn, config: SchedulerConfig) -> int:
    """Replicas ready to hand out: UNSENT rows plus replicas of GENERATED units.

    GENERATED units are counted at the current replication policy.
    """
    pending = txn.count("workunits", state=WuState.GENERATED) * config.unit_policy()["target_replication"]
    return txn.count("tasks", state=TaskState.UNSENT) + pending


def _range_width(txn: Txn, config: SchedulerConfig) -> int:
    width = config.generator_range_width_evens
    if config.capability_sizing:
        hosts = txn.select("hosts")
        if hosts:
            mean_class = sum(h.cpu_class for h in hosts) / len(hosts)
            width = max(1, round(width * mean_class / 3))
    return width


def work_generator_step(
    txn: Txn, config: SchedulerConfig, frontier: int, now: float = 0.0
) -> Tuple[List[WorkUnit], int]:
    """Create units from ``frontier`` upward until the unsent buffer is full.

    Returns the new units and the frontier just past the last one.
    """
    if frontier % 2 or frontier < 4:
        raise ValueError(f"frontier must be an even number >= 4, got {frontier}")
    created = []
    buffered = unsent_buffer(txn, config)
    policy = config.unit_policy()
    width = _range_width(txn, config)
    while buffered < config.unsent_buffer_target:
        if config.range_limit is not None and frontier > config.range_limit:
            break
        end = frontier + 2 * (width - 1)
        if config.range_limit is not None:
            end = min(end, config.range_limit)
        wu = WorkUnit(
            wu_id=txn.new_id(),
            range_start=frontier,
            range_end=end,
            created_at=now,
            **policy,
        )
        txn.put("workunits", wu)
        created.append(wu)
        buffered += wu.target_replication
        frontier = end + 2
    return created, frontier


def _wake(txn: Txn, wu_id: int, at: float) -> None:
    """Ask the transitioner to look at a unit no later than ``at``."""
    wu = txn.get("workunits", wu_id)
    if wu is not None and (wu.transition_time is None or at < wu.transition_time):
        txn.put("workunits", wu.evolve(transition_time=at))


def _send(txn: Txn, task: TaskInstance, wu: WorkUnit, host: HostRecord, now: float):
    deadline = now + wu.deadline_delay
    transition_task(
        txn, task.task_id, TaskState.UNSENT, TaskState.SENT, host_id=host.host_id, sent_at=now, deadline=deadline
    )
    _wake(txn, wu.wu_id, deadline)
    return task.task_id, wu.range, deadline


def assign_work(
    txn: Txn, host_id: int, config: SchedulerConfig, now: float, max_tasks: Optional[int] = None
) -> List[tuple]:
    """Hand out replicas to a host: reissued/reserved ones first, then fresh units."""
    host = txn.require("hosts", host_id)
    room = config.per_host_task_cap - host.tasks_in_progress
    if max_tasks is not None:
        room = min(room, max_tasks)
    out = []
    if room <= 0:
        return out
    for task in txn.scan("tasks", state=TaskState.UNSENT):
        if len(out) >= room:
            break
        wu = txn.get("workunits", task.wu_id)
        if wu is None or wu.state is not WuState.IN_PROGRESS:
            continue
        if any(t.host_id == host_id for t in txn.select("tasks", wu_id=wu.wu_id)):
            continue
        out.append(_send(txn, task, wu, host, now))
    for wu in txn.scan("workunits", state=WuState.GENERATED):
        if len(out) >= room:
            break
        if not transition_wu(txn, wu.wu_id, WuState.GENERATED, WuState.IN_PROGRESS):
            continue
        tasks = [_new_task(txn, wu.wu_id) for _ in range(wu.target_replication)]
        out.append(_send(txn, tasks[0], wu, host, now))
    if out:
        txn.put("hosts", host.evolve(tasks_in_progress=host.tasks_in_progress + len(out)))
    return out


def report_result(txn: Txn, task_id: int, payload, now: float) -> Tuple[str, Optional[str]]:
    """Accept an uploaded result; returns (status, reason)."""
    if not isinstance(payload, GoldbachResult):
        payload = GoldbachResult.from_json(payload)
    task = txn.require("tasks", task_id)
    if task.state is TaskState.SENT:
        transition_task(txn, task_id, TaskState.SENT, TaskState.RETURNED, payload=payload, received_at=now)
        _adjust_host(txn, task.host_id, -1)
        _wake(txn, task.wu_id, now)
        return OK, None
    if task.state in PAYLOAD_STATES:
        if task.payload == payload:
            return OK, None
        return REJECTED, "a different result was already received for this task"
    if task.state is TaskState.TIMED_OUT:
        return REJECTED, "task timed out"
    if task.state is TaskState.CANCELLED:
        return REJECTED, "task cancelled"
    raise InvalidPayload(f"task {task_id} was never sent")


def transitioner_step(txn: Txn, now: float, config: SchedulerConfig) -> Dict[str, list]:
    """Deadlines, reissues, validation flags and exhaustion, for units that are due.

    Reissue rules per in-progress unit: a replacement for each replica that
    timed out, one extra replica after the validator reported disagreement,
    and a top-up when nothing is outstanding and too few results are in. No
    rule grows a unit past ``max_total_instances``. Results that arrive for a
    unit that already left IN_PROGRESS are flagged for the validator to settle.
    """
    actions = defaultdict(list)
    for wu in txn.select_due("workunits", "transition_time", now):
        tasks = txn.select("tasks", wu_id=wu.wu_id)
        timed_out = 0
        for i, t in enumerate(tasks):
            if t.state is TaskState.SENT and now > t.deadline:
                transition_task(txn, t.task_id, TaskState.SENT, TaskState.TIMED_OUT)
                _adjust_host(txn, t.host_id, -1)
                tasks[i] = txn.get("tasks", t.task_id)
                timed_out += 1
                actions["timed_out"].append(t.task_id)
        by_state = defaultdict(int)
        for t in tasks:
            by_state[t.state] += 1
        updated = wu.evolve(transition_time=None)

        if wu.state is WuState.IN_PROGRESS:
            total = len(tasks)
            wanted = timed_out
            if wu.disagreement:
                updated = updated.evolve(disagreement=False)
                wanted += 1
            outstanding = by_state[TaskState.UNSENT] + by_state[TaskState.SENT]
            returned = by_state[TaskState.RETURNED]
            received = sum(by_state[s] for s in PAYLOAD_STATES)
            if not wanted and not outstanding and not wu.flagged and returned < wu.quorum:
                wanted = wu.quorum - returned
            for _ in range(max(0, min(wanted, wu.max_total_instances - total))):
                actions["reissued"].append(_new_task(txn, wu.wu_id).task_id)
                total += 1
                outstanding += 1
            if returned >= wu.quorum and received > wu.checked_received and not wu.flagged:
                updated = updated.evolve(flagged=True)
                actions["flagged"].append(wu.wu_id)
            if outstanding == 0 and not updated.flagged and total >= wu.max_total_instances:
                for t in tasks:
                    if t.state is TaskState.RETURNED:
                        transition_task(txn, t.task_id, TaskState.RETURNED, TaskState.INVALID)
                updated = updated.evolve(state=WuState.ERROR, flagged=False, disagreement=False)
                actions["errored"].append(wu.wu_id)
        elif by_state[TaskState.RETURNED] and not wu.flagged:
            updated = updated.evolve(flagged=True)
            actions["flagged"].append(wu.wu_id)

        deadlines = [t.deadline for t in tasks if t.state is TaskState.SENT]
        if deadlines:
            updated = updated.evolve(transition_time=min(deadlines))
        if updated.state is wu.state:
            txn.put("workunits", updated)
        else:
            changes = {k: getattr(updated, k) for k in ("transition_time", "flagged", "disagreement")}
            transition_wu(txn, wu.wu_id, wu.state, updated.state, **changes)
    return actions


def credit_for(result: GoldbachResult, config: SchedulerConfig) -> int:
    return math.ceil(result.evens_checked / 10**6) * config.credit_per_million_evens


def _grant(txn: Txn, task: TaskInstance, credit: int) -> None:
    transition_task(txn, task.task_id, TaskState.RETURNED, TaskState.VALID, credit_granted=credit)
    host = txn.require("hosts", task.host_id)
    user = txn.require("users", host.user_id)
    txn.put("users", user.evolve(credit_total=user.credit_total + credit))


def validator_step(txn: Txn, config: SchedulerConfig, now: float = 0.0) -> Tuple[List[int], int]:
    """Check flagged units for a quorum of identical results and grant credit.

    For a unit that already has a canonical result, late results are settled
    instead: a match is credited, anything else is marked invalid.
    """
    validated = []
    granted = 0
    for wu in txn.select("workunits", flagged=True):
        tasks = txn.select("tasks", wu_id=wu.wu_id)
        if wu.state is not WuState.IN_PROGRESS:
            granted += _settle_late(txn, wu, tasks, config)
            txn.put("workunits", txn.get("workunits", wu.wu_id).evolve(flagged=False))
            continue
        rng = wu.range
        groups: Dict[GoldbachResult, List[TaskInstance]] = defaultdict(list)
        for t in tasks:
            if t.state is not TaskState.RETURNED:
                continue
            if t.payload.is_consistent_with(rng):
                groups[t.payload].append(t)
            else:
                transition_task(txn, t.task_id, TaskState.RETURNED, TaskState.INVALID)
        quorate = [g for g in groups.values() if len(g) >= wu.quorum]
        received = sum(1 for t in tasks if t.state in PAYLOAD_STATES)
        if not quorate:
            txn.put(
                "workunits",
                txn.get("workunits", wu.wu_id).evolve(
                    flagged=False,
                    disagreement=True,
                    checked_received=received,
                    transition_time=now,
                ),
            )
            continue
        winners = min(quorate, key=lambda g: (-len(g), g[0].task_id))
        canonical = winners[0]
        credit = credit_for(canonical.payload, config)
        for group in groups.values():
            for t in group:
                if group is winners:
                    _grant(txn, t, credit)
                    granted += credit
                else:
                    transition_task(txn, t.task_id, TaskState.RETURNED, TaskState.INVALID)
        for t in tasks:
            if t.state is TaskState.UNSENT:
                txn.delete("tasks", t.task_id)
        transition_wu(
            txn,
            wu.wu_id,
            WuState.IN_PROGRESS,
            WuState.VALIDATED,
            canonical_result_id=canonical.task_id,
            flagged=False,
            disagreement=False,
            checked_received=received,
        )
        validated.append(wu.wu_id)
    return validated, granted


def _settle_late(txn: Txn, wu: WorkUnit, tasks, config) -> int:
    canonical = txn.get("tasks", wu.canonical_result_id) if wu.canonical_result_id else None
    granted = 0
    for t in tasks:
        if t.state is not TaskState.RETURNED:
            continue
        if canonical is not None and canonical.payload == t.payload:
            credit = credit_for(t.payload, config)
            _grant(txn, t, credit)
            granted += credit
        else:
            transition_task(txn, t.task_id, TaskState.RETURNED, TaskState.INVALID)
    return granted


def assimilator_step(txn: Txn, now: float = 0.0) -> List[int]:
    """Archive canonical results of VALIDATED units; safe to repeat."""
    archived = []
    for wu in txn.select("workunits", state=WuState.VALIDATED):
        if txn.get("science_archive", wu.wu_id) is None:
            canonical = txn.require("tasks", wu.canonical_result_id)
            txn.put(
                "science_archive",
                ScienceArchiveRecord(
                    wu_id=wu.wu_id,
                    range=GoldbachRange(wu.range_start, wu.range_end),
                    result=canonical.payload,
                    validated_at=now,
                    canonical_task_id=canonical.task_id,
                ),
            )
            archived.append(wu.wu_id)
        transition_wu(txn, wu.wu_id, WuState.VALIDATED, WuState.ASSIMILATED, assimilated_at=now)
    return archived


def cleanup_step(txn: Txn, now: float, config: SchedulerConfig) -> List[int]:
    """Purge task rows of units assimilated longer than the retention period ago.

    Credit held by purged VALID rows is folded into the owner's
    ``purged_credit`` so audits keep balancing; ``credit_total`` is untouched.
    """
    purged = []
    cutoff = now - config.retention_after_assimilation
    for wu in txn.select_due("workunits", "assimilated_at", cutoff, state=WuState.ASSIMILATED):
        if now - wu.assimilated_at <= config.retention_after_assimilation:
            continue
        for t in txn.select("tasks", wu_id=wu.wu_id):
            if t.state is TaskState.SENT:
                transition_task(txn, t.task_id, TaskState.SENT, TaskState.CANCELLED)
                _adjust_host(txn, t.host_id, -1)
            elif t.state is TaskState.VALID and t.credit_granted:
                host = txn.require("hosts", t.host_id)
                user = txn.require("users", host.user_id)
                txn.put("users", user.evolve(purged_credit=user.purged_credit + t.credit_granted))
            txn.delete("tasks", t.task_id)
        # leaving the sorted index keeps later scans proportional to live units
        transition_wu(txn, wu.wu_id, WuState.ASSIMILATED, WuState.PURGED, assimilated_at=None)
        purged.append(wu.wu_id)
    return purged
