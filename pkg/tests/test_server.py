import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from goldgrid.core import MemoryStore, TaskState, WuState
from goldgrid.core.lifecycle import user_credit_recomputed
from goldgrid.errors import InvalidArgument, InvalidPayload, NotFound
from goldgrid.goldbach import GoldbachResult
from goldgrid.server import (
    SchedulerConfig,
    assimilator_step,
    cleanup_step,
    transitioner_step,
    validator_step,
    work_generator_step,
)
from goldgrid.server.daemons import unsent_buffer

from conftest import Harness, small_config


def fake_result(task, checksum=None):
    """A structurally valid payload for a task dict; honest ones share a checksum."""
    evens = (task["range_end"] - task["range_start"]) // 2 + 1
    return GoldbachResult(evens, 3, task["range_end"], 777 if checksum is None else checksum)


def one_unit(**kw):
    cfg = small_config(unsent_buffer_target=1, **kw)
    h = Harness(cfg)
    h.project.run_work_generator()
    return h


# work generator


def test_generator_first_unit_width():
    store = MemoryStore()
    cfg = SchedulerConfig()
    with store.transaction() as txn:
        created, frontier = work_generator_step(txn, cfg, 4)
    assert (created[0].range_start, created[0].range_end) == (4, 2_000_002)
    assert created[1].range_start == 2_000_004
    assert len(created) == 50
    assert frontier == created[-1].range_end + 2


def test_generator_throttles_on_full_buffer():
    store = MemoryStore()
    cfg = small_config()
    with store.transaction() as txn:
        work_generator_step(txn, cfg, 4)
        assert unsent_buffer(txn, cfg) >= cfg.unsent_buffer_target
        created, frontier = work_generator_step(txn, cfg, 1000)
    assert created == [] and frontier == 1000


def test_generator_rejects_bad_frontier():
    with MemoryStore().transaction() as txn:
        with pytest.raises(ValueError):
            work_generator_step(txn, small_config(), 5)


def test_generator_respects_range_limit():
    cfg = small_config(unsent_buffer_target=100, range_limit=450)
    with MemoryStore().transaction() as txn:
        created, frontier = work_generator_step(txn, cfg, 4)
    assert [(w.range_start, w.range_end) for w in created] == [(4, 202), (204, 402), (404, 450)]
    assert frontier == 452


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 50), st.integers(1, 20), st.lists(st.integers(0, 3), min_size=1, max_size=8))
def test_generator_tiles_the_number_line(width, target, drains):
    cfg = small_config(generator_range_width_evens=width, unsent_buffer_target=target)
    store = MemoryStore()
    frontier = 4
    units = []
    for drain in drains:
        with store.transaction() as txn:
            created, frontier = work_generator_step(txn, cfg, frontier)
            units += created
            for wu in txn.select("workunits", state=WuState.GENERATED)[:drain]:
                txn.put("workunits", wu.evolve(state=WuState.IN_PROGRESS))
    expected = 4
    for wu in units:
        assert wu.range_start == expected
        assert wu.range.evens == width
        expected = wu.range_end + 2
    assert expected == frontier


# assign


def test_fresh_host_gets_one_replica():
    h = one_unit()
    host = h.host()
    tasks = h.project.request_work(host)
    assert len(tasks) == 1
    assert h.project.request_work(host) == []
    (wu,) = h.units()
    assert wu.state is WuState.IN_PROGRESS
    assert tasks[0]["deadline_unix"] == h.clock.now() + wu.deadline_delay


def test_two_hosts_get_distinct_replicas():
    h = one_unit()
    a, b = h.host("a"), h.host("b")
    ta, tb = h.project.request_work(a), h.project.request_work(b)
    assert ta[0]["task_id"] != tb[0]["task_id"]
    sent = h.tasks(state=TaskState.SENT)
    assert sorted(t.host_id for t in sent) == sorted([a, b])


def test_host_at_cap_gets_nothing():
    h = Harness(small_config(unsent_buffer_target=20, per_host_task_cap=3))
    h.project.run_work_generator()
    host = h.host()
    assert len(h.project.request_work(host)) == 3
    assert h.project.request_work(host) == []
    assert h.get("hosts", host).tasks_in_progress == 3


def test_request_work_honours_max_tasks():
    h = Harness(small_config(unsent_buffer_target=20))
    h.project.run_work_generator()
    assert len(h.project.request_work(h.host(), max_tasks=2)) == 2


def test_unknown_host():
    h = one_unit()
    with pytest.raises(NotFound):
        h.project.request_work(999)


# report


def test_report_ack_and_idempotence():
    h = one_unit()
    host = h.host()
    (task,) = h.project.request_work(host)
    res = h.honest(task)
    assert h.project.report_result(task["task_id"], res) == {"status": "ok"}
    t = h.get("tasks", task["task_id"])
    assert t.state is TaskState.RETURNED and t.payload == res
    assert h.get("hosts", host).tasks_in_progress == 0
    history = len(h.store.history)
    assert h.project.report_result(task["task_id"], res) == {"status": "ok"}
    assert len(h.store.history) == history
    assert h.project.report_result(task["task_id"], fake_result(task, 1))["status"] == "rejected"


def test_report_after_timeout_is_rejected():
    h = one_unit()
    (task,) = h.project.request_work(h.host())
    h.clock.advance(101)
    h.project.run_transitioner()
    out = h.project.report_result(task["task_id"], h.honest(task))
    assert out["status"] == "rejected"
    assert h.get("tasks", task["task_id"]).state is TaskState.TIMED_OUT
    with h.store.view() as v:
        assert v.count("science_archive") == 0


def test_report_errors():
    h = one_unit()
    (task,) = h.project.request_work(h.host())
    with pytest.raises(NotFound):
        h.project.report_result(999, h.honest(task))
    with pytest.raises(InvalidPayload):
        h.project.report_result(task["task_id"], {"evens_checked": 1})


# transitioner


def test_timeout_reissues_one_replica():
    h = one_unit()
    host = h.host("a")
    (task,) = h.project.request_work(host)
    h.clock.advance(101)
    actions = h.project.run_transitioner()
    assert actions["timed_out"] == [task["task_id"]]
    assert len(actions["reissued"]) == 1
    states = sorted(t.state.value for t in h.tasks())
    assert states == ["TIMED_OUT", "UNSENT", "UNSENT"]
    assert h.get("hosts", host).tasks_in_progress == 0
    # the replacement must go to some other host
    assert h.project.request_work(host) == []
    assert len(h.project.request_work(h.host("b"))) == 1


def test_quorum_flags_unit():
    h = one_unit()
    for name in "ab":
        (task,) = h.project.request_work(h.host(name))
        h.project.report_result(task["task_id"], fake_result(task))
    actions = h.project.run_transitioner()
    (wu,) = h.units()
    assert actions["flagged"] == [wu.wu_id] and wu.flagged


def test_exhaustion_without_agreement_errors_unit():
    h = one_unit(range_limit=202)
    for i in range(8):
        tasks = h.project.request_work(h.host(f"h{i}"))
        assert len(tasks) == 1
        h.project.report_result(tasks[0]["task_id"], fake_result(tasks[0], checksum=i))
        # flag and validate, then let the transitioner react to the disagreement
        h.project.tick()
        h.project.tick()
    (wu,) = [w for w in h.units() if w.range_start == 4]
    assert wu.state is WuState.ERROR
    tasks = h.tasks(wu_id=wu.wu_id)
    assert len(tasks) == 8
    assert all(t.state is TaskState.INVALID for t in tasks)


def test_instances_never_exceed_max():
    h = one_unit(max_total_instances=3)
    for i in range(6):
        for t in h.project.request_work(h.host(f"h{i}")):
            if t["range_start"] == 4:
                h.project.report_result(t["task_id"], fake_result(t, checksum=i))
        h.project.tick()
    wu = next(w for w in h.units() if w.range_start == 4)
    assert len(h.tasks(wu_id=wu.wu_id)) <= 3
    assert wu.state is WuState.ERROR


# validator


def test_validator_grants_credit_for_agreement():
    store = MemoryStore()
    h = Harness(SchedulerConfig(unsent_buffer_target=1), store=store)
    h.project.run_work_generator()
    reported = []
    for name in "ab":
        (task,) = h.project.request_work(h.host(name))
        assert task["range_end"] - task["range_start"] == 2 * (10**6 - 1)
        h.project.report_result(task["task_id"], fake_result(task))
        reported.append(task["task_id"])
    h.project.run_transitioner()
    validated, granted = h.project.run_validator()
    (wu,) = h.units()
    assert validated == [wu.wu_id] and granted == 2
    assert wu.state is WuState.VALIDATED and wu.canonical_result_id == min(reported)
    for tid in reported:
        t = h.get("tasks", tid)
        assert t.state is TaskState.VALID and t.credit_granted == 1
    with store.view() as v:
        assert [u.credit_total for u in v.select("users")] == [1, 1]


def test_disagreement_adds_a_replica():
    h = one_unit()
    for i, name in enumerate("ab"):
        (task,) = h.project.request_work(h.host(name))
        h.project.report_result(task["task_id"], fake_result(task, checksum=i))
    h.project.run_transitioner()
    validated, _ = h.project.run_validator()
    (wu,) = h.units()
    assert validated == [] and wu.disagreement and wu.state is WuState.IN_PROGRESS
    actions = h.project.run_transitioner()
    assert len(actions["reissued"]) == 1
    (task,) = h.project.request_work(h.host("c"))
    h.project.report_result(task["task_id"], fake_result(task, checksum=1))
    h.project.run_transitioner()
    validated, _ = h.project.run_validator()
    assert validated == [wu.wu_id]
    states = {t.host_id: t.state for t in h.tasks()}
    assert sorted(s.value for s in states.values()) == ["INVALID", "VALID", "VALID"]


def test_structurally_invalid_payload_is_rejected_at_once():
    h = one_unit()
    tasks = [h.project.request_work(h.host(n))[0] for n in "ab"]
    bad = GoldbachResult(100, 3, tasks[0]["range_end"] + 2, 777)
    h.project.report_result(tasks[0]["task_id"], bad)
    h.project.report_result(tasks[1]["task_id"], fake_result(tasks[1]))
    h.project.run_transitioner()
    h.project.run_validator()
    t = h.get("tasks", tasks[0]["task_id"])
    assert t.state is TaskState.INVALID and t.credit_granted == 0
    assert h.units()[0].state is WuState.IN_PROGRESS


def test_quorum_three_after_set_config():
    h = one_unit()
    h.project.set_config("quorum", "3")
    h.project.set_config("unsent_buffer_target", "6")
    h.project.run_work_generator()
    wu = h.units(state=WuState.GENERATED)[-1]
    assert (wu.quorum, wu.target_replication) == (3, 3)
    ids = []
    for name in "abc":
        tasks = h.project.request_work(h.host(name))
        t = next(t for t in tasks if t["range_start"] == wu.range_start)
        ids.append(t["task_id"])
        h.project.report_result(t["task_id"], fake_result(t))
        h.project.run_transitioner()
        validated, _ = h.project.run_validator()
        assert (wu.wu_id in validated) == (name == "c")


# assimilator and cleanup


def _validated(h):
    for name in "ab":
        (task,) = h.project.request_work(h.host(name))
        h.project.report_result(task["task_id"], fake_result(task))
    h.project.run_transitioner()
    h.project.run_validator()
    return h.units()[0]


def test_assimilator_archives_once():
    h = one_unit()
    wu = _validated(h)
    assert h.project.run_assimilator() == [wu.wu_id]
    assert h.project.run_assimilator() == []
    with h.store.transaction() as txn:
        assert assimilator_step(txn) == []
        rec = txn.get("science_archive", wu.wu_id)
        assert txn.count("science_archive") == 1
    assert rec.result == fake_result({"range_start": wu.range_start, "range_end": wu.range_end})
    assert h.get("workunits", wu.wu_id).state is WuState.ASSIMILATED


def test_cleanup_respects_retention():
    h = one_unit()
    wu = _validated(h)
    h.project.run_assimilator()
    with h.store.view() as v:
        credit = {u.user_id: u.credit_total for u in v.select("users")}
    assert h.project.run_cleanup() == []
    h.clock.advance(50)
    assert h.project.run_cleanup() == []
    h.clock.advance(1)
    assert h.project.run_cleanup() == [wu.wu_id]
    assert h.get("workunits", wu.wu_id).state is WuState.PURGED
    assert h.tasks(wu_id=wu.wu_id) == []
    with h.store.view() as v:
        assert v.get("science_archive", wu.wu_id) is not None
        assert {u.user_id: u.credit_total for u in v.select("users")} == credit
        assert user_credit_recomputed(v) == credit


def test_cleanup_step_directly():
    h = one_unit()
    _validated(h)
    h.project.run_assimilator()
    cfg = h.project.config
    with h.store.transaction() as txn:
        assert cleanup_step(txn, h.clock.now(), cfg) == []
        assert len(cleanup_step(txn, h.clock.now() + cfg.retention_after_assimilation + 1, cfg)) == 1


# admin


def test_cancel_wu():
    h = one_unit()
    tasks = [h.project.request_work(h.host(n))[0] for n in "ab"]
    wu = h.units()[0]
    assert h.project.cancel_wu(wu.wu_id) == 2
    assert all(h.get("tasks", t["task_id"]).state is TaskState.CANCELLED for t in tasks)
    assert h.get("workunits", wu.wu_id).state is WuState.ERROR
    assert h.project.report_result(tasks[0]["task_id"], fake_result(tasks[0]))["status"] == "rejected"
    with pytest.raises(NotFound):
        h.project.cancel_wu(999)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        SchedulerConfig(quorum=0)
    with pytest.raises(InvalidArgument):
        SchedulerConfig(deadline_delay=0)
    with pytest.raises(InvalidArgument):
        SchedulerConfig().with_value("nope", "1")
    assert SchedulerConfig().with_value("range_limit", "none").range_limit is None
    assert SchedulerConfig().with_value("capability_sizing", "yes").capability_sizing


def test_daemon_steps_work_on_raw_transactions():
    h = one_unit()
    cfg = h.project.config
    with h.store.transaction() as txn:
        assert transitioner_step(txn, h.clock.now(), cfg) == {}
        assert validator_step(txn, cfg) == ([], 0)


# full pipeline with honest workers


def test_pipeline_tiles_archive():
    h = Harness(small_config(unsent_buffer_target=6, range_limit=2000))
    hosts = [h.host(f"u{i}") for i in range(3)]
    for _ in range(20):
        h.project.tick()
        for host in hosts:
            for t in h.project.request_work(host):
                h.project.report_result(t["task_id"], h.honest(t))
        h.clock.advance(1)
    with h.store.view() as v:
        archive = sorted(v.select("science_archive"), key=lambda r: r.range.start)
        assert all(w.state is WuState.ASSIMILATED for w in v.select("workunits"))
    expected = 4
    for rec in archive:
        assert rec.range.start == expected
        expected = rec.range.end + 2
    assert expected == 2002
    sent = [t for t in h.tasks() if t.host_id is not None]
    pairs = {(t.wu_id, t.host_id) for t in sent}
    assert len(pairs) == len(sent)
