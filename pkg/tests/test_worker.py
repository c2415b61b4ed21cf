import itertools
import threading

import pytest

from goldgrid.core import TaskState, WuState
from goldgrid.goldbach import Checkpoint, GoldbachRange, verify_range
from goldgrid.worker import HostSpec, ServerClient, ServerUnavailable, Worker, register, with_backoff
from goldgrid.worker.client import backoff_delays

from conftest import LiveServer, small_config

SPEC = HostSpec(2**30, 2**33, 2)


def test_backoff_schedule():
    delays = list(itertools.islice(backoff_delays(), 12))
    assert delays[:5] == [1, 2, 4, 8, 16]
    assert delays[-1] == 300 and max(delays) == 300


def test_backoff_retries_until_server_returns():
    calls, slept = [], []

    def flaky():
        calls.append(1)
        if len(calls) < 4:
            raise ServerUnavailable("down")
        return "up"

    assert with_backoff(flaky, sleep=slept.append) == "up"
    assert slept == [1, 2, 4]


def test_backoff_gives_up_when_asked():
    def down():
        raise ServerUnavailable("down")

    with pytest.raises(ServerUnavailable):
        with_backoff(down, sleep=lambda _: None, max_attempts=3)


def test_unreachable_server_raises_unavailable():
    client = ServerClient("http://127.0.0.1:9", timeout=1)
    with pytest.raises(ServerUnavailable):
        client.stats()


def test_register_persists_and_reuses(tmp_path, live):
    client = ServerClient(live.url)
    first = register(client, SPEC, "alice", tmp_path)
    assert (tmp_path / "host_id").read_text() == str(first)
    assert register(client, SPEC, "alice", tmp_path) == first
    with live.store.view() as v:
        assert v.count("hosts") == 1


def test_register_survives_server_outage(tmp_path, live):
    real = ServerClient(live.url)
    attempts = []

    class Flaky:
        def register_host(self, *a):
            attempts.append(1)
            if len(attempts) < 3:
                raise ServerUnavailable("down")
            return real.register_host(*a)

    host = register(Flaky(), SPEC, "bob", tmp_path, sleep=lambda _: None)
    assert len(attempts) == 3 and host > 0


def test_host_spec_must_be_positive():
    with pytest.raises(ValueError):
        HostSpec(0, 1, 1)


def _worker(live, tmp_path, **kw):
    client = ServerClient(live.url)
    host = register(client, SPEC, "carol", tmp_path)
    return Worker(client, tmp_path, host, cpu_class=2, poll_interval=0.05, **kw)


def test_one_task_end_to_end(tmp_path, live):
    live.project.run_work_generator()
    w = _worker(live, tmp_path)
    w.run(max_tasks_total=1)
    (tid,) = w.reported
    with live.store.view() as v:
        task = v.get("tasks", tid)
        wu = v.get("workunits", task.wu_id)
    assert task.state is TaskState.RETURNED
    assert task.payload == verify_range(wu.range)
    assert w.pending_checkpoints() == {}


def test_kill_and_resume_is_bitwise_identical(tmp_path):
    live = LiveServer(small_config(generator_range_width_evens=3000, unsent_buffer_target=1))
    try:
        live.project.run_work_generator()
        w = _worker(live, tmp_path, checkpoint_every=500, kill_after=2)
        w.run(idle_exit=1)
        assert w.reported == {}
        (tid, path), = w.pending_checkpoints().items()
        ckpt = Checkpoint.load(path)
        assert ckpt.evens_done == 1000 and path.stat().st_size < 1024
        state = w.state()
        assert state.active == ((tid, ckpt.range, path),) and len(state.active) <= 4

        again = _worker(live, tmp_path, checkpoint_every=500)
        again.run(max_tasks_total=1)
        assert list(again.reported) == [tid]
        with live.store.view() as v:
            assert v.get("tasks", tid).payload == verify_range(ckpt.range)
    finally:
        live.close()


def test_rejected_report_discards_checkpoint(tmp_path):
    live = LiveServer(small_config(unsent_buffer_target=1, generator_range_width_evens=2000))
    try:
        live.project.run_work_generator()
        w = _worker(live, tmp_path, checkpoint_every=200, kill_after=1)
        w.run(idle_exit=1)
        (tid, path), = w.pending_checkpoints().items()
        with live.store.view() as v:
            wu_id = v.get("tasks", tid).wu_id
        live.project.cancel_wu(wu_id)

        again = _worker(live, tmp_path)
        again.run(max_tasks_total=1)
        assert again.reported[tid]["status"] == "rejected"
        assert not path.exists()
        with live.store.view() as v:
            assert v.get("tasks", tid).state is TaskState.CANCELLED
            assert v.get("workunits", wu_id).state is WuState.ERROR
    finally:
        live.close()


class CountingClient:
    """Hands out an endless supply of small tasks and records peak concurrency."""

    url = "fake://"

    def __init__(self):
        self.ids = itertools.count(1)
        self.outstanding = set()
        self.peak = 0
        self.lock = threading.Lock()

    def request_work(self, host_id, max_tasks=None):
        n = 4 if max_tasks is None else max_tasks
        tasks = []
        with self.lock:
            for _ in range(n):
                tid = next(self.ids)
                self.outstanding.add(tid)
                tasks.append({"task_id": tid, "range_start": 4, "range_end": 4000, "deadline_unix": 0})
            self.peak = max(self.peak, len(self.outstanding))
        return tasks

    def report_result(self, task_id, result):
        with self.lock:
            self.outstanding.discard(task_id)
        return {"status": "ok"}


@pytest.mark.parametrize("cpu_class,cap,expect", [(5, 4, 4), (2, 4, 2), (3, 2, 2)])
def test_worker_never_exceeds_cap(tmp_path, cpu_class, cap, expect):
    client = CountingClient()
    w = Worker(client, tmp_path, 1, cpu_class=cpu_class, task_cap=cap, poll_interval=0.01)
    w.run(max_tasks_total=12)
    assert len(w.reported) == 12
    assert client.peak == expect
    assert w.pending_checkpoints() == {}


def test_cheat_mode_changes_checksum(tmp_path):
    client = CountingClient()
    w = Worker(client, tmp_path, 1, behavior="cheat")
    w._accept({"task_id": 7, "range_start": 4, "range_end": 100})
    assert w.compute(7).checksum64 != verify_range(GoldbachRange(4, 100)).checksum64
