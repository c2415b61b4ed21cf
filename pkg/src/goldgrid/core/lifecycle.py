"""Compare-and-set transitions and the credit audit."""
from __future__ import annotations


from goldgrid.core.store import Txn
from goldgrid.core.types import TaskState, WuState, legal_task, legal_wu


def transition_wu(txn: Txn, wu_id: int, src: WuState, dst: WuState, **changes) -> bool:
    """Move a work unit from ``src`` to ``dst`` if it is still in ``src``.

    Extra keyword arguments are applied to the row in the same write.
    Raises NotFound for an unknown unit.
    """
    wu = txn.require("workunits", wu_id)
    if wu.state is not src or not legal_wu(src, dst):
        return False
    txn.put("workunits", wu.evolve(state=dst, **changes))
    return True


def transition_task(txn: Txn, task_id: int, src: TaskState, dst: TaskState, **changes) -> bool:
    task = txn.require("tasks", task_id)
    if task.state is not src or not legal_task(src, dst):
        return False
    txn.put("tasks", task.evolve(state=dst, **changes))
    return True


def user_credit_recomputed(txn: Txn) -> dict:
    """user_id -> credit summed from VALID task rows plus folded-in purged credit."""
    totals = {u.user_id: u.purged_credit for u in txn.select("users")}
    owner = {h.host_id: h.user_id for h in txn.select("hosts")}
    for task in txn.select("tasks", state=TaskState.VALID):
        uid = owner[task.host_id]
        totals[uid] = totals.get(uid, 0) + task.credit_granted
    return totals


def audit_credit(txn: Txn, user_id: int) -> int:
    """Recompute a user's credit from the task table; raises NotFound for unknown users."""
    user = txn.require("users", user_id)
    hosts = {h.host_id for h in txn.select("hosts") if h.user_id == user_id}
    total = user.purged_credit
    for task in txn.select("tasks", state=TaskState.VALID):
        if task.host_id in hosts:
            total += task.credit_granted
    return total
