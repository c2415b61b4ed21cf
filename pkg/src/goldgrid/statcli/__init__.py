"""Project statistics and administration."""
from goldgrid.statcli.stats import (
    DailyGrowth,
    ThroughputEstimate,
    daily_growth,
    estimate_throughput,
    export_csv,
    read_csv,
)

__all__ = [
    "DailyGrowth",
    "ThroughputEstimate",
    "daily_growth",
    "estimate_throughput",
    "export_csv",
    "read_csv",
]
