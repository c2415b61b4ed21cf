"""Goldbach range verification: the science application."""
from goldgrid.goldbach.kernel import BACKEND
from goldgrid.goldbach.oracle import ORACLE_LIMIT, oracle_verify_range
from goldgrid.goldbach.result import Checkpoint, GoldbachRange, GoldbachResult
from goldgrid.goldbach.sieve import PrimeTable, sieve_primes
from goldgrid.goldbach.verify import CHECKPOINT_EVERY, min_witness, verify_range


def checkpoint_path(work_dir, task_id):
    from pathlib import Path

    return Path(work_dir) / f"task_{task_id}.ckpt"


__all__ = [
    "BACKEND",
    "CHECKPOINT_EVERY",
    "Checkpoint",
    "GoldbachRange",
    "GoldbachResult",
    "ORACLE_LIMIT",
    "PrimeTable",
    "checkpoint_path",
    "min_witness",
    "oracle_verify_range",
    "sieve_primes",
    "verify_range",
]
