"""Project server: scheduler endpoints and the work pipeline daemons."""
from goldgrid.server.config import SchedulerConfig
from goldgrid.server.daemons import (
    assign_work,
    assimilator_step,
    cleanup_step,
    report_result,
    transitioner_step,
    validator_step,
    work_generator_step,
)
from goldgrid.server.project import DAEMON_ORDER, ProjectServer

__all__ = [
    "DAEMON_ORDER",
    "ProjectServer",
    "SchedulerConfig",
    "assign_work",
    "assimilator_step",
    "cleanup_step",
    "report_result",
    "transitioner_step",
    "validator_step",
    "work_generator_step",
]
