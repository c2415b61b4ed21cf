"""Range verification of the Goldbach property with resumable state."""
from __future__ import annotations

from typing import Callable, Optional

from goldgrid.errors import InvalidArgument
from goldgrid.goldbach.kernel import get_scan, prime_vector
from goldgrid.goldbach.result import MASK64, Checkpoint, GoldbachRange, GoldbachResult
from goldgrid.goldbach.sieve import SEGMENT_ODD_FLAGS, PrimeTable, base_primes, odd_flags

# Witnesses are searched among primes below this bound first; the largest
# known minimal witness below 4e18 is 9781.
WITNESS_BOUND = 1 << 14
CHECKPOINT_EVERY = 100_000

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_vectors: dict = {}


def _odd_primes(backend):
    key = backend or "default"
    if key not in _vectors:
        _vectors[key] = prime_vector(base_primes(WITNESS_BOUND), backend)
    return _vectors[key]


def is_prime_u64(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for every n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _slow_witness(n: int) -> Optional[int]:
    """Continue the witness search past WITNESS_BOUND."""
    q = WITNESS_BOUND + 1
    half = n // 2
    while q <= half:
        if is_prime_u64(q) and is_prime_u64(n - q):
            return q
        q += 2
    return None


def min_witness(n: int, primes: PrimeTable) -> Optional[int]:
    """Smallest prime p with n - p prime, or None when n has no decomposition."""
    if n % 2 or n < 4:
        raise InvalidArgument(f"expected an even integer >= 4, got {n}")
    if primes.limit < n - 2:
        raise InvalidArgument(f"prime table up to {primes.limit} does not cover {n}")
    half = n // 2
    for p in primes.primes():
        if p > half:
            break
        if primes.is_prime(n - p):
            return p
    return None


def verify_range(
    rng: GoldbachRange,
    checkpoint: Optional[Checkpoint] = None,
    checkpoint_every: int = CHECKPOINT_EVERY,
    on_checkpoint: Optional[Callable[[Checkpoint], None]] = None,
    *,
    segment_size: int = SEGMENT_ODD_FLAGS,
    backend: Optional[str] = None,
) -> GoldbachResult:
    """Check every even n in ``rng`` and summarize the minimal witnesses.

    If ``checkpoint`` is given the scan resumes from it. ``on_checkpoint`` is
    called with the scan state each time the number of evens done reaches a
    multiple of ``checkpoint_every``. The scan stops at the first even with
    no decomposition and reports it as ``counterexample``.
    """
    if checkpoint_every < 1:
        raise InvalidArgument("checkpoint_every must be >= 1")
    state = checkpoint or Checkpoint.initial(rng)
    state.check_against(rng)
    scan = get_scan(backend)
    primes = _odd_primes(backend)
    n = state.next_n
    cs, mp, am, done = (
        state.partial_checksum,
        state.partial_max_min_p,
        state.partial_argmax_n,
        state.evens_done,
    )
    while n <= rng.end:
        seg_end = min(rng.end, n + 2 * (segment_size - 1))
        wlo = max(1, n - WITNESS_BOUND) | 1
        flags = odd_flags(wlo, seg_end)
        while n <= seg_end:
            chunk_last = rng.start + 2 * ((done // checkpoint_every + 1) * checkpoint_every - 1)
            block_end = min(seg_end, chunk_last)
            stop, cs, mp, am, done = scan(flags, wlo, primes, n, block_end, cs, mp, am, done)
            n = stop
            if n <= block_end:
                p = None if primes[-1] >= n // 2 else _slow_witness(n)
                if p is None:
                    return GoldbachResult(done + 1, mp, am, cs, counterexample=n)
                cs = (cs + p) & MASK64
                if p >= mp:
                    mp, am = p, n
                done += 1
                n += 2
                if n <= block_end:
                    continue
            if on_checkpoint is not None and done % checkpoint_every == 0 and n <= rng.end:
                on_checkpoint(Checkpoint(rng, n, cs, mp, am, done))
    return GoldbachResult(done, mp, am, cs)
