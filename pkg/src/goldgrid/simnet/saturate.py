"""Scheduler saturation: a FIFO request queue in front of a fixed-speed server.

Requests arrive as a Poisson stream at ``base_rate * multiplier`` per second
and each takes ``service_seconds`` of scheduler time. The arrival stream for
a larger multiplier is a superset of the one for a smaller multiplier
(independent unit streams plus one thinned stream), so paired runs differ
only by the extra load.
"""
from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from typing import List

from goldgrid.errors import InvalidArgument


@dataclass(frozen=True)
class SaturationConfig:
    seed: int = 0
    ticks: int = 300
    base_rate: float = 20.0
    service_seconds: float = 0.02
    warmup_ticks: int = 30

    def __post_init__(self):
        if self.ticks < 1 or self.base_rate <= 0 or self.service_seconds <= 0:
            raise InvalidArgument("ticks, base_rate and service_seconds must be positive")
        if not 0 <= self.warmup_ticks < self.ticks:
            raise InvalidArgument("warmup_ticks must lie in [0, ticks)")


@dataclass
class SaturationReport:
    multiplier: float
    arrivals: List[int]
    served: List[int]
    queue_depth: List[int]
    busy_fraction: List[float]
    latencies: List[float]
    warmup_ticks: int

    def percentile(self, q: float) -> float:
        """Nearest-rank percentile of request latency (wait plus service)."""
        if not self.latencies:
            return 0.0
        ordered = sorted(self.latencies)
        rank = max(1, math.ceil(q / 100.0 * len(ordered)))
        return ordered[rank - 1]

    def backlog_grows(self) -> bool:
        """Queue depth strictly increases every tick after warmup."""
        depth = self.queue_depth[self.warmup_ticks :]
        return all(b > a for a, b in zip(depth, depth[1:]))

    def max_backlog(self) -> int:
        return max(self.queue_depth, default=0)


def _stream(seed: int, index: int, rate: float, horizon: float, keep: float = 1.0) -> List[float]:
    rng = random.Random(f"{seed}:requests:{index}")
    out, t = [], 0.0
    while True:
        t += rng.expovariate(rate)
        if t >= horizon:
            return out
        if rng.random() < keep:
            out.append(t)


def saturate_server(config: SaturationConfig, request_rate_multiplier: float) -> SaturationReport:
    if request_rate_multiplier < 1:
        raise InvalidArgument("request_rate_multiplier must be >= 1")
    horizon = float(config.ticks)
    whole = int(request_rate_multiplier)
    frac = request_rate_multiplier - whole
    streams = [_stream(config.seed, k, config.base_rate, horizon) for k in range(whole)]
    if frac > 0:
        streams.append(_stream(config.seed, whole, config.base_rate, horizon, keep=frac))
    arrivals_at = list(heapq.merge(*streams))

    s = config.service_seconds
    ticks = config.ticks
    arrivals = [0] * ticks
    served = [0] * ticks
    busy = [0.0] * ticks
    latencies = []
    departures = []
    free_at = 0.0
    for a in arrivals_at:
        start = max(a, free_at)
        free_at = start + s
        arrivals[int(a)] += 1
        latencies.append(free_at - a)
        departures.append(free_at)
        # service time split across the ticks it overlaps
        t = start
        while t < free_at and t < horizon:
            edge = min(free_at, math.floor(t) + 1.0)
            busy[int(t)] += edge - t
            t = edge
    for d in departures:
        if d < horizon:
            served[int(d)] += 1
    depth, queued = [], 0
    for k in range(ticks):
        queued += arrivals[k] - served[k]
        depth.append(queued)
    return SaturationReport(
        multiplier=request_rate_multiplier,
        arrivals=arrivals,
        served=served,
        queue_depth=depth,
        busy_fraction=[min(1.0, b) for b in busy],
        latencies=latencies,
        warmup_ticks=config.warmup_ticks,
    )
