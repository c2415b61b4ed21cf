"""Volunteer worker agent."""
from goldgrid.worker.agent import HostSpec, Killed, Worker, WorkerState, register
from goldgrid.worker.client import ServerClient, ServerUnavailable, with_backoff

__all__ = ["HostSpec", "Killed", "ServerClient", "ServerUnavailable", "Worker", "WorkerState", "register", "with_backoff"]
