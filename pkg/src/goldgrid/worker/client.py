"""HTTP client for the scheduler endpoints, with exponential backoff."""
from __future__ import annotations

import json
import logging
import time
import urllib.error
import urllib.request

log = logging.getLogger(__name__)

BACKOFF_BASE = 1.0
BACKOFF_CAP = 300.0


class ServerUnavailable(ConnectionError):
    pass


class ServerClient:
    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url.rstrip("/")
        self.timeout = timeout

    def _call(self, method: str, path: str, body=None) -> dict:
        data = None if body is None else json.dumps(body).encode("utf-8")
        req = urllib.request.Request(
            self.url + path, data=data, method=method, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", "replace")
            if exc.code >= 500:
                raise ServerUnavailable(f"{path}: HTTP {exc.code}") from exc
            raise RuntimeError(f"{path}: HTTP {exc.code} {detail}") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise ServerUnavailable(f"{path}: {exc}") from exc

    def register_host(self, user_name, ram_bytes, free_disk_bytes, cpu_class) -> dict:
        return self._call(
            "POST",
            "/register_host",
            {"user_name": user_name, "ram_bytes": ram_bytes, "free_disk_bytes": free_disk_bytes, "cpu_class": cpu_class},
        )

    def request_work(self, host_id: int, max_tasks=None) -> list:
        body = {"host_id": host_id}
        if max_tasks is not None:
            body["max_tasks"] = max_tasks
        return self._call("POST", "/request_work", body)["tasks"]

    def report_result(self, task_id: int, result) -> dict:
        return self._call("POST", "/report_result", {"task_id": task_id, **result.to_json()})

    def stats(self) -> dict:
        return self._call("GET", "/stats")


def backoff_delays(base: float = BACKOFF_BASE, cap: float = BACKOFF_CAP):
    delay = base
    while True:
        yield delay
        delay = min(cap, delay * 2)


def with_backoff(fn, *, base=BACKOFF_BASE, cap=BACKOFF_CAP, sleep=time.sleep, max_attempts=None, stop=None):
    """Call ``fn`` until it stops raising ServerUnavailable, sleeping 1, 2, 4, ... s (capped)."""
    attempt = 0
    for delay in backoff_delays(base, cap):
        attempt += 1
        try:
            return fn()
        except ServerUnavailable as exc:
            if max_attempts is not None and attempt >= max_attempts:
                raise
            if stop is not None and stop.is_set():
                raise
            log.info("server unavailable (%s); retrying in %.0f s", exc, delay)
            sleep(delay)
