"""Project administration over a file-store data directory."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

from goldgrid.core import FileStore, RealClock
from goldgrid.errors import InvalidArgument
from goldgrid.server import ProjectServer, SchedulerConfig


def open_project(data_dir, clock=None, config: Optional[SchedulerConfig] = None,
                 must_exist: bool = True, **store_options) -> ProjectServer:
    """Open the project stored in ``data_dir``; ``config`` replaces the stored one."""
    path = Path(data_dir)
    if must_exist and not (path / "log.bin").exists() and not (path / "snapshot.bin").exists():
        raise InvalidArgument(f"{path} is not an initialized project (run 'admin init' first)")
    return ProjectServer(FileStore(path, **store_options), clock or RealClock(), config)


def init_project(data_dir, config: Optional[SchedulerConfig] = None) -> dict:
    """Create the data directory with frontier 4 and the given (or default) config."""
    project = open_project(data_dir, config=config, must_exist=False)
    try:
        return project.status()
    finally:
        project.store.close()


def project_status(data_dir) -> dict:
    project = open_project(data_dir, read_only=True)
    try:
        out = project.status()
        out["config"] = project.config.to_dict()
        return out
    finally:
        project.store.close()


def cancel_wu(data_dir, wu_id: int) -> int:
    """Cancel a unit's outstanding replicas; returns how many SENT tasks were cancelled."""
    project = open_project(data_dir)
    try:
        return project.cancel_wu(wu_id)
    finally:
        project.store.close()


def set_config(data_dir, key: str, value: str) -> SchedulerConfig:
    project = open_project(data_dir)
    try:
        return project.set_config(key, value)
    finally:
        project.store.close()
