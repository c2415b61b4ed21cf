from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from goldgrid.errors import InvalidArgument


@dataclass(frozen=True)
class SchedulerConfig:
    """Scheduler and daemon parameters, persisted in the store's metadata.

    The replication fields are the policy stamped onto newly generated work
    units. ``range_limit`` stops the work generator at that even number.
    """

    per_host_task_cap: int = 4
    unsent_buffer_target: int = 100
    generator_range_width_evens: int = 10**6
    credit_per_million_evens: int = 1
    retention_after_assimilation: float = 86400.0
    daemon_poll_interval: float = 5.0
    target_replication: int = 2
    quorum: int = 2
    max_total_instances: int = 8
    deadline_delay: float = 7 * 86400.0
    range_limit: Optional[int] = None
    capability_sizing: bool = False
    stats_window: float = 3600.0

    def __post_init__(self):
        for name in (
            "per_host_task_cap",
            "unsent_buffer_target",
            "generator_range_width_evens",
            "credit_per_million_evens",
            "target_replication",
            "quorum",
            "max_total_instances",
        ):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be >= 1")
        for name in ("retention_after_assimilation", "daemon_poll_interval", "deadline_delay", "stats_window"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be > 0")
        if self.range_limit is not None and (self.range_limit % 2 or self.range_limit < 4):
            raise InvalidArgument("range_limit must be an even number >= 4")

    def unit_policy(self) -> dict:
        """Replication policy for a new unit; replication is raised to the quorum if needed."""
        replication = max(self.target_replication, self.quorum)
        return {
            "target_replication": replication,
            "quorum": self.quorum,
            "max_total_instances": max(self.max_total_instances, replication),
            "deadline_delay": self.deadline_delay,
        }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SchedulerConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def with_value(self, key: str, text) -> "SchedulerConfig":
        """Copy with one field set from a string (as given on a command line)."""
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise InvalidArgument(f"unknown config key {key!r}")
        kind = types[key]
        if not isinstance(text, str):
            value = text
        elif kind == "bool":
            value = text.lower() in ("1", "true", "yes", "on")
        elif kind == "Optional[int]":
            value = None if text.lower() in ("", "none") else int(text)
        elif kind == "int":
            value = int(text)
        else:
            value = float(text)
        return replace(self, **{key: value})
