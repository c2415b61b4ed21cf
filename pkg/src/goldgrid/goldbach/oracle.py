"""Brute-force reference: trial-division primality and an ascending scan.

Deliberately shares nothing with the sieve or the scan kernels.
"""
from __future__ import annotations

from math import isqrt

from goldgrid.errors import OracleRangeTooLarge
from goldgrid.goldbach.result import MASK64, GoldbachRange, GoldbachResult

ORACLE_LIMIT = 10**6


def is_prime_trial(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    for d in range(3, isqrt(n) + 1, 2):
        if n % d == 0:
            return False
    return True


def oracle_min_witness(n: int):
    for p in range(2, n // 2 + 1):
        if is_prime_trial(p) and is_prime_trial(n - p):
            return p
    return None


def oracle_verify_range(rng: GoldbachRange) -> GoldbachResult:
    if rng.end > ORACLE_LIMIT:
        raise OracleRangeTooLarge(f"oracle handles ranges up to {ORACLE_LIMIT}, got end={rng.end}")
    checksum = max_p = argmax = done = 0
    for n in range(rng.start, rng.end + 1, 2):
        p = oracle_min_witness(n)
        if p is None:
            return GoldbachResult(done + 1, max_p, argmax, checksum, counterexample=n)
        checksum = (checksum + p) & MASK64
        if p >= max_p:
            max_p, argmax = p, n
        done += 1
    return GoldbachResult(done, max_p, argmax, checksum)
