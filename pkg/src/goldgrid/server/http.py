"""JSON-over-HTTP scheduler endpoints and the threaded daemon runner."""
from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from goldgrid.errors import InvalidArgument, InvalidPayload, NotFound
from goldgrid.server.project import DAEMON_ORDER, ProjectServer

log = logging.getLogger(__name__)


def _int_field(body: dict, name: str, required: bool = True):
    value = body.get(name)
    if value is None and not required:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidArgument(f"{name} must be an integer")
    return value


class SchedulerHandler(BaseHTTPRequestHandler):
    project: ProjectServer = None  # set by make_http_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, code: int, obj) -> None:
        data = json.dumps(obj).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path.split("?")[0] == "/stats":
            self._send(200, self.project.stats())
        else:
            self._send(404, {"error": f"no route {self.path}"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        try:
            body = json.loads(self.rfile.read(length).decode("utf-8") or "{}")
            if not isinstance(body, dict):
                raise InvalidArgument("request body must be a JSON object")
            route = {
                "/register_host": self._register_host,
                "/request_work": self._request_work,
                "/report_result": self._report_result,
            }.get(self.path)
            if route is None:
                self._send(404, {"error": f"no route {self.path}"})
                return
            self._send(200, route(body))
        except NotFound as exc:
            self._send(404, {"error": str(exc)})
        except (InvalidArgument, InvalidPayload, ValueError) as exc:
            self._send(400, {"error": str(exc)})

    def _register_host(self, body):
        host_id, user_id = self.project.register_host(
            str(body.get("user_name") or ""),
            _int_field(body, "ram_bytes"),
            _int_field(body, "free_disk_bytes"),
            _int_field(body, "cpu_class"),
        )
        return {"host_id": host_id, "user_id": user_id}

    def _request_work(self, body):
        tasks = self.project.request_work(_int_field(body, "host_id"), _int_field(body, "max_tasks", False))
        return {"tasks": tasks}

    def _report_result(self, body):
        task_id = _int_field(body, "task_id")
        try:
            return self.project.report_result(task_id, body)
        except NotFound:
            return {"status": "rejected", "reason": f"unknown task {task_id}"}


def make_http_server(project: ProjectServer, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundSchedulerHandler", (SchedulerHandler,), {"project": project})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


class DaemonRunner:
    """One polling thread per daemon, as separate workers over the shared store."""

    def __init__(self, project: ProjectServer, interval: float = None):
        self.project = project
        self.interval = interval
        self._stop = threading.Event()
        self._threads = []

    def start(self):
        for name in DAEMON_ORDER:
            t = threading.Thread(target=self._loop, args=(name,), name=f"daemon-{name}", daemon=True)
            t.start()
            self._threads.append(t)

    def _loop(self, name):
        step = self.project.daemon(name)
        while not self._stop.is_set():
            try:
                step()
            except Exception:
                log.exception("daemon %s failed", name)
            self._stop.wait(self.interval or self.project.config.daemon_poll_interval)

    def stop(self):
        self._stop.set()
        for t in self._threads:
            t.join()
        self._threads.clear()
