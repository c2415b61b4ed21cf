"""Pure-Python scan kernel; same contract as the compiled ``_ckernel``."""

MASK64 = (1 << 64) - 1


def scan_evens(flags, wlo, odd_primes, n_from, n_to, checksum, max_p, argmax, done):
    """Accumulate minimal Goldbach witnesses for even n in [n_from, n_to].

    ``flags[i]`` tells whether ``wlo + 2*i`` is prime; the window must cover
    ``n - q`` for every n in the block and every q in ``odd_primes`` up to n/2.
    Stops early at the first n with no witness among ``odd_primes`` and
    returns that n, otherwise returns n_to + 2 as the first element.
    """
    n = n_from
    while n <= n_to:
        if n == 4:
            p = 2
        else:
            half = n >> 1
            p = 0
            base = n - wlo
            for q in odd_primes:
                if q > half:
                    break
                if flags[(base - q) >> 1]:
                    p = q
                    break
            if not p:
                break
        checksum = (checksum + p) & MASK64
        if p >= max_p:
            max_p = p
            argmax = n
        done += 1
        n += 2
    return n, checksum, max_p, argmax, done


def mark_composites(flags, lo, odd_primes, count):
    """Clear the flags of odd multiples of the first ``count`` primes (other than the primes themselves)."""
    size = len(flags)
    for p in odd_primes[:count]:
        start = max(p * p, -(-lo // p) * p)
        if start % 2 == 0:
            start += p
        idx = (start - lo) // 2
        if idx < size:
            flags[idx::p] = bytes((size - 1 - idx) // p + 1)
