"""Deterministic simulation harness for the project server."""
from goldgrid.simnet.model import Availability, Behavior, BehaviorModel, EventKind, SimConfig, SimEvent
from goldgrid.simnet.saturate import SaturationConfig, SaturationReport, saturate_server
from goldgrid.simnet.sim import TRACE_COLUMNS, SimTrace, run_sim

__all__ = [
    "Availability",
    "Behavior",
    "BehaviorModel",
    "EventKind",
    "SaturationConfig",
    "SaturationReport",
    "SimConfig",
    "SimEvent",
    "SimTrace",
    "TRACE_COLUMNS",
    "run_sim",
    "saturate_server",
]
