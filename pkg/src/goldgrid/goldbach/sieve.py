"""Segmented sieve of Eratosthenes over odd numbers.

Segments store one byte per odd number; 2 is handled by callers.
"""
from __future__ import annotations

from bisect import bisect_right
from math import isqrt
from typing import Iterator, List

from goldgrid.errors import InvalidArgument
from goldgrid.goldbach import kernel

SEGMENT_ODD_FLAGS = 1 << 20

_base: List[int] = []
_base_limit = 1
_base_vec = []


def base_primes(limit: int) -> List[int]:
    """Odd primes <= limit from a plain sieve, cached and grown on demand."""
    global _base, _base_limit
    if limit > _base_limit:
        new_limit = max(limit, 2 * _base_limit, 1 << 12)
        flags = bytearray(b"\x01") * (new_limit + 1)
        flags[0:2] = b"\x00\x00"
        for p in range(2, isqrt(new_limit) + 1):
            if flags[p]:
                flags[p * p :: p] = bytes(len(range(p * p, new_limit + 1, p)))
        _base = [p for p in range(3, new_limit + 1, 2) if flags[p]]
        _base_limit = new_limit
    if limit >= _base_limit:
        return _base
    return _base[: bisect_right(_base, limit)]


def _base_vector():
    global _base_vec
    if len(_base_vec) != len(_base):
        _base_vec = kernel.prime_vector(_base)
    return _base_vec


def odd_flags(lo: int, hi: int) -> bytearray:
    """Primality flags for the odd numbers lo, lo+2, ..., <= hi (lo odd)."""
    if lo % 2 == 0 or lo < 1:
        raise InvalidArgument(f"segment must start at a positive odd number, got {lo}")
    if hi < lo:
        return bytearray()
    size = (hi - lo) // 2 + 1
    flags = bytearray(b"\x01") * size
    if lo == 1:
        flags[0] = 0
    primes = base_primes(isqrt(hi))
    kernel.mark_composites(flags, lo, _base_vector(), len(primes))
    return flags


def segments(lo: int, hi: int, segment_size: int = SEGMENT_ODD_FLAGS) -> Iterator[tuple]:
    """Yield (segment_lo, flags) covering the odd numbers of [lo, hi]."""
    if lo % 2 == 0:
        lo += 1
    while lo <= hi:
        seg_hi = min(hi, lo + 2 * (segment_size - 1))
        yield lo, odd_flags(lo, seg_hi)
        lo = seg_hi + 2 if seg_hi % 2 else seg_hi + 1


class PrimeTable:
    """Immutable prime membership table over [0, limit]."""

    def __init__(self, limit: int, flags: bytearray):
        self.limit = limit
        self._flags = bytes(flags)

    def __contains__(self, x) -> bool:
        return self.is_prime(x)

    def is_prime(self, x: int) -> bool:
        if x == 2:
            return self.limit >= 2
        if x < 2 or x % 2 == 0:
            return False
        if x > self.limit:
            raise InvalidArgument(f"{x} beyond table limit {self.limit}")
        return bool(self._flags[x >> 1])

    def primes(self) -> Iterator[int]:
        yield 2
        flags = self._flags
        for i in range(1, len(flags)):
            if flags[i]:
                yield 2 * i + 1

    def count(self) -> int:
        return 1 + self._flags.count(1)

    def __repr__(self):
        return f"PrimeTable(limit={self.limit})"


def sieve_primes(limit: int, segment_size: int = SEGMENT_ODD_FLAGS) -> PrimeTable:
    """Build the prime table for [2, limit] one segment at a time."""
    if limit < 2:
        raise InvalidArgument(f"sieve limit must be >= 2, got {limit}")
    flags = bytearray()
    for _lo, seg in segments(1, limit, segment_size):
        flags += seg
    return PrimeTable(limit, flags)
