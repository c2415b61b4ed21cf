import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from goldgrid.core import (
    AbortInjectingStore,
    FileStore,
    HostRecord,
    MemoryStore,
    TaskInstance,
    TaskState,
    UserRecord,
    WorkUnit,
    WuState,
    audit_credit,
    transition_task,
    transition_wu,
)
from goldgrid.core.lifecycle import user_credit_recomputed
from goldgrid.core.types import TASK_EDGES, WU_EDGES, legal_task, legal_wu
from goldgrid.errors import NotFound, StoreError, TransactionAborted
from goldgrid.goldbach import GoldbachResult

from conftest import Harness


def _unit(store, state=WuState.GENERATED, **kw):
    with store.transaction() as txn:
        wu = WorkUnit(wu_id=txn.new_id(), range_start=4, range_end=10, state=state, **kw)
        txn.put("workunits", wu)
    return wu.wu_id


def _task(store, state=TaskState.SENT, **kw):
    with store.transaction() as txn:
        t = TaskInstance(task_id=txn.new_id(), wu_id=0, state=state, **kw)
        txn.put("tasks", t)
    return t.task_id


# transitions


def test_wu_transitions():
    store = MemoryStore()
    wu = _unit(store)
    with store.transaction() as txn:
        assert transition_wu(txn, wu, WuState.GENERATED, WuState.IN_PROGRESS)
        assert txn.get("workunits", wu).state is WuState.IN_PROGRESS
        assert not transition_wu(txn, wu, WuState.GENERATED, WuState.IN_PROGRESS)
    validated = _unit(store, WuState.VALIDATED, canonical_result_id=1)
    with store.transaction() as txn:
        assert not transition_wu(txn, validated, WuState.VALIDATED, WuState.GENERATED)
        assert txn.get("workunits", validated).state is WuState.VALIDATED
        with pytest.raises(NotFound):
            transition_wu(txn, 999, WuState.GENERATED, WuState.IN_PROGRESS)


def test_task_transitions():
    store = MemoryStore()
    sent = _task(store)
    timed_out = _task(store, TaskState.TIMED_OUT)
    unsent = _task(store, TaskState.UNSENT)
    with store.transaction() as txn:
        assert transition_task(txn, sent, TaskState.SENT, TaskState.RETURNED)
        assert not transition_task(txn, timed_out, TaskState.TIMED_OUT, TaskState.VALID)
        assert not transition_task(txn, unsent, TaskState.UNSENT, TaskState.RETURNED)
        assert txn.get("tasks", unsent).state is TaskState.UNSENT
        with pytest.raises(NotFound):
            transition_task(txn, 999, TaskState.SENT, TaskState.RETURNED)


@given(st.sampled_from(list(WuState)), st.sampled_from(list(WuState)))
def test_wu_transition_matches_graph(src, dst):
    store = MemoryStore()
    wu = _unit(store, src, canonical_result_id=1 if src in (WuState.VALIDATED, WuState.ASSIMILATED, WuState.PURGED) else None)
    with store.transaction() as txn:
        ok = transition_wu(txn, wu, src, dst)
        assert ok == (dst in WU_EDGES[src])
        assert txn.get("workunits", wu).state is (dst if ok else src)


@given(st.sampled_from(list(TaskState)), st.sampled_from(list(TaskState)), st.sampled_from(list(TaskState)))
def test_task_transition_is_compare_and_set(actual, src, dst):
    store = MemoryStore()
    tid = _task(store, actual)
    with store.transaction() as txn:
        ok = transition_task(txn, tid, src, dst)
        assert ok == (actual is src and legal_task(src, dst))


def test_no_backward_edges():
    order = [WuState.GENERATED, WuState.IN_PROGRESS, WuState.VALIDATED, WuState.ASSIMILATED, WuState.PURGED]
    for i, a in enumerate(order):
        for b in order[: i + 1]:
            assert not legal_wu(a, b)
    for s in (TaskState.VALID, TaskState.INVALID, TaskState.TIMED_OUT, TaskState.CANCELLED):
        assert not TASK_EDGES[s]


def test_concurrent_cas_has_one_winner():
    store = MemoryStore()
    wu = _unit(store)
    wins = []
    barrier = threading.Barrier(16)

    def attempt():
        barrier.wait()
        with store.transaction() as txn:
            if transition_wu(txn, wu, WuState.GENERATED, WuState.IN_PROGRESS):
                wins.append(1)

    threads = [threading.Thread(target=attempt) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(wins) == 1


# store


def test_select_and_indexes():
    store = MemoryStore()
    ids = [_task(store, s) for s in (TaskState.SENT, TaskState.UNSENT, TaskState.SENT)]
    with store.view() as v:
        assert [t.task_id for t in v.select("tasks", state=TaskState.SENT)] == [ids[0], ids[2]]
        assert v.count("tasks", state=TaskState.UNSENT) == 1
        assert next(v.scan("tasks", state=TaskState.SENT)).task_id == ids[0]
    with store.transaction() as txn:
        txn.delete("tasks", ids[0])
        txn.put("tasks", txn.get("tasks", ids[1]).evolve(state=TaskState.SENT))
        assert [t.task_id for t in txn.select("tasks", state=TaskState.SENT)] == [ids[1], ids[2]]
        assert txn.count("tasks", state=TaskState.SENT) == 2
    with store.view() as v:
        assert v.count("tasks", state=TaskState.UNSENT) == 0
        assert v.get("tasks", ids[0]) is None


def test_select_due():
    store = MemoryStore()
    with store.transaction() as txn:
        for i, t in enumerate((5.0, None, 1.0, 3.0)):
            txn.put("workunits", WorkUnit(wu_id=i + 1, range_start=4, range_end=4, transition_time=t))
    with store.view() as v:
        assert [w.wu_id for w in v.select_due("workunits", "transition_time", 3.0)] == [3, 4]
        assert v.select_due("workunits", "transition_time", 0.5) == []


def test_read_only_view():
    store = MemoryStore()
    with store.view() as v:
        with pytest.raises(StoreError):
            v.put("users", UserRecord(1, "x", 0.0))


def test_ids_are_monotonic():
    store = MemoryStore()
    with store.transaction() as txn:
        ids = [txn.new_id() for _ in range(5)]
    with store.transaction() as txn:
        ids.append(txn.new_id())
    assert ids == sorted(set(ids))


def test_exception_discards_transaction():
    store = MemoryStore()
    wu = _unit(store)
    with pytest.raises(RuntimeError):
        with store.transaction() as txn:
            transition_wu(txn, wu, WuState.GENERATED, WuState.IN_PROGRESS)
            raise RuntimeError("boom")
    with store.view() as v:
        assert v.get("workunits", wu).state is WuState.GENERATED


def test_evolve():
    wu = WorkUnit(wu_id=1, range_start=4, range_end=10)
    assert wu.evolve(state=WuState.IN_PROGRESS).state is WuState.IN_PROGRESS
    assert wu.state is WuState.GENERATED
    with pytest.raises(TypeError):
        wu.evolve(bogus=1)


# atomicity under injected crashes


def _drive_pipeline(project, harness):
    project.run_work_generator()
    hosts = [harness.host(f"u{i}") for i in range(3)]
    sent = []
    for h in hosts:
        sent += [(h, t) for t in project.request_work(h)]
    for _, t in sent:
        project.report_result(t["task_id"], harness.honest(t))
    harness.clock.advance(1)
    project.tick()
    harness.clock.advance(200)
    project.tick()


def _snapshot(store):
    return {t: dict(rows) for t, rows in store._tables.items()}, dict(store._meta)


@pytest.mark.parametrize("fail_at", range(1, 11))
def test_crash_between_writes_leaves_no_partial_transition(fail_at):
    store = AbortInjectingStore(fail_at, record_history=True)
    store.armed = False
    h = Harness(store=store)
    project = h.project
    project.run_work_generator()
    hosts = [h.host(f"u{i}") for i in range(3)]
    sent = []
    for host in hosts:
        sent += project.request_work(host)
    for t in sent:
        project.report_result(t["task_id"], h.honest(t))
    h.clock.advance(1)
    store.armed = True
    aborted = 0
    for name in ("transitioner", "validator", "assimilator"):
        before = _snapshot(store)
        try:
            project.daemon(name)()
        except TransactionAborted:
            aborted += 1
            assert _snapshot(store) == before
        store.armed = False
        project.daemon(name)()
        store.armed = True
    assert aborted >= 1
    with store.view() as v:
        units = v.select("workunits")
        assert units and all(wu.state is WuState.ASSIMILATED for wu in units)
        assert v.count("science_archive") == len(units)
    with store.view() as v:
        for wu in v.select("workunits"):
            wu.check()
        for t in v.select("tasks"):
            t.check()


# history soundness


def test_history_follows_legal_edges():
    h = Harness()
    _drive_pipeline(h.project, h)
    assert h.store.history
    for table, key, old, new in h.store.history:
        if old is None or new is None or old is new:
            continue
        legal = legal_wu if table == "workunits" else legal_task
        assert legal(old, new), (table, key, old, new)


# credit audit


def test_audit_credit_examples():
    store = MemoryStore()
    with store.transaction() as txn:
        txn.put("users", UserRecord(1, "a", 0.0))
        txn.put("users", UserRecord(2, "b", 0.0, credit_total=2))
        txn.put("hosts", HostRecord(3, 2, 1, 1, 1, 0.0))
        res = GoldbachResult(4, 3, 10, 11)
        for tid in (4, 5):
            txn.put("tasks", TaskInstance(tid, 9, 3, TaskState.VALID, payload=res, credit_granted=1))
    with store.view() as v:
        assert audit_credit(v, 1) == 0
        assert audit_credit(v, 2) == 2
        with pytest.raises(NotFound):
            audit_credit(v, 42)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 4), st.sampled_from(list(TaskState)), st.integers(0, 5)), max_size=40))
def test_audit_matches_brute_force(rows):
    store = MemoryStore()
    res = GoldbachResult(4, 3, 10, 11)
    with store.transaction() as txn:
        for u in range(3):
            txn.put("users", UserRecord(100 + u, f"u{u}", 0.0))
        for hidx in range(5):
            txn.put("hosts", HostRecord(200 + hidx, 100 + hidx % 3, 1, 1, 1, 0.0))
        totals = {100 + u: 0 for u in range(3)}
        for i, (hidx, state, credit) in enumerate(rows):
            credit = credit if state is TaskState.VALID else 0
            payload = res if state in (TaskState.RETURNED, TaskState.VALID, TaskState.INVALID) else None
            txn.put("tasks", TaskInstance(1000 + i, 1, 200 + hidx, state, payload=payload, credit_granted=credit))
            totals[100 + hidx % 3] += credit
        for uid, total in totals.items():
            txn.put("users", txn.get("users", uid).evolve(credit_total=total))
    with store.view() as v:
        recomputed = user_credit_recomputed(v)
        for uid, total in totals.items():
            assert audit_credit(v, uid) == total == recomputed[uid] == v.get("users", uid).credit_total


# file store


def _fill(store, n):
    for _ in range(n):
        with store.transaction() as txn:
            uid = txn.new_id()
            txn.put("users", UserRecord(uid, f"user{uid}", float(uid)))


def test_filestore_survives_restart(tmp_path):
    store = FileStore(tmp_path)
    _fill(store, 5)
    wu = _unit(store)
    with store.transaction() as txn:
        transition_wu(txn, wu, WuState.GENERATED, WuState.IN_PROGRESS)
        txn.delete("users", 1)
    store.close()
    again = FileStore(tmp_path)
    with again.view() as v:
        assert v.count("users") == 4
        assert v.get("workunits", wu).state is WuState.IN_PROGRESS
        assert v.select("workunits", state=WuState.IN_PROGRESS)[0].wu_id == wu
        assert v.meta("next_id") == 7


def test_filestore_ignores_torn_tail(tmp_path):
    store = FileStore(tmp_path)
    _fill(store, 3)
    store.close()
    log = tmp_path / "log.bin"
    data = log.read_bytes()
    log.write_bytes(data + data[: len(data) // 3 // 2])
    again = FileStore(tmp_path)
    with again.view() as v:
        assert v.count("users") == 3
    _fill(again, 1)
    again.close()
    with FileStore(tmp_path).view() as v:
        assert v.count("users") == 4


def test_filestore_compaction(tmp_path):
    store = FileStore(tmp_path, compact_every=4)
    _fill(store, 10)
    assert (tmp_path / "snapshot.bin").exists()
    store.close()
    with FileStore(tmp_path).view() as v:
        assert [u.user_id for u in v.select("users")] == list(range(1, 11))


def test_filestore_read_only(tmp_path):
    store = FileStore(tmp_path)
    _fill(store, 2)
    ro = FileStore(tmp_path, read_only=True)
    with ro.view() as v:
        assert v.count("users") == 2
    with pytest.raises(StoreError):
        _fill(ro, 1)
    store.close()


def test_filestore_round_trips_results(tmp_path):
    store = FileStore(tmp_path)
    res = GoldbachResult(4, 3, 10, 2**64 - 1)
    with store.transaction() as txn:
        txn.put("tasks", TaskInstance(1, 2, 3, TaskState.RETURNED, 0.0, 10.0, 5.0, res))
    store.close()
    with FileStore(tmp_path).view() as v:
        assert v.get("tasks", 1).payload == res
