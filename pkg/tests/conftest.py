import pytest

from goldgrid.core import MemoryStore, VirtualClock
from goldgrid.goldbach import GoldbachRange, verify_range
from goldgrid.server import ProjectServer, SchedulerConfig


def small_config(**kw):
    base = dict(
        generator_range_width_evens=100,
        unsent_buffer_target=4,
        deadline_delay=100.0,
        retention_after_assimilation=50.0,
        daemon_poll_interval=1.0,
    )
    base.update(kw)
    return SchedulerConfig(**base)


class Harness:
    """A project server on a memory store with a hand-driven clock."""

    def __init__(self, config=None, store=None):
        self.clock = VirtualClock(1000.0)
        self.store = store or MemoryStore(record_history=True)
        self.project = ProjectServer(self.store, self.clock, config or small_config())

    def host(self, name="alice", cpu_class=2):
        return self.project.register_host(name, 2**30, 2**33, cpu_class)[0]

    def honest(self, task):
        return verify_range(GoldbachRange(task["range_start"], task["range_end"]))

    def tasks(self, **filters):
        with self.store.view() as v:
            return v.select("tasks", **filters)

    def units(self, **filters):
        with self.store.view() as v:
            return v.select("workunits", **filters)

    def get(self, table, key):
        with self.store.view() as v:
            return v.get(table, key)


@pytest.fixture
def harness():
    return Harness()


class LiveServer:
    """HTTP scheduler on an ephemeral loopback port, daemons driven by hand."""

    def __init__(self, config=None):
        import threading

        from goldgrid.core import RealClock
        from goldgrid.server.http import make_http_server

        self.store = MemoryStore()
        self.project = ProjectServer(self.store, RealClock(), config or small_config())
        self.httpd = make_http_server(self.project)
        self.url = "http://%s:%d" % self.httpd.server_address[:2]
        self._thread = threading.Thread(target=self.httpd.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def live():
    server = LiveServer()
    yield server
    server.close()


def sim_gaps(trace):
    """Ranges below the frontier covered by neither the archive nor an ERROR unit."""
    from goldgrid.core import WuState

    with trace.store.view() as v:
        errored = [(w.range_start, w.range_end) for w in v.select("workunits", state=WuState.ERROR)]
    spans = sorted([(s, e) for s, e, _ in trace.archive] + errored)
    gaps, expected = [], 4
    for s, e in spans:
        if s != expected:
            gaps.append((expected, s))
        expected = e + 2
    if expected != trace.status["frontier"]:
        gaps.append((expected, trace.status["frontier"]))
    return gaps


def oracle_mismatches(trace, cache):
    """Archived results that differ from the brute-force oracle (memoized by range)."""
    from goldgrid.goldbach import oracle_verify_range

    bad = 0
    for s, e, result in trace.archive:
        key = (s, e)
        if key not in cache:
            cache[key] = oracle_verify_range(GoldbachRange(s, e))
        bad += cache[key] != result
    return bad


# acceptance reporting: one PASS/FAIL line per criterion, repeated in the summary
ACCEPTANCE_LINES = []


class Criterion:
    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.details = []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc is not None and str(exc):
            detail = f"{detail}; {str(exc).splitlines()[0]}" if detail else str(exc).splitlines()[0]
        line = f"{verdict} criterion {self.number} ({self.title}): {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return False


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
