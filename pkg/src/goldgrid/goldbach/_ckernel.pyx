# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_pykernel`` for the contracts."""

ctypedef unsigned long long u64


def scan_evens(const unsigned char[::1] flags, u64 wlo,
               const u64[::1] odd_primes, u64 n_from, u64 n_to,
               u64 checksum, u64 max_p, u64 argmax, u64 done):
    cdef Py_ssize_t i, nprimes = odd_primes.shape[0]
    cdef u64 n = n_from, half, q, p, base
    with nogil:
        while n <= n_to:
            if n == 4:
                p = 2
            else:
                half = n >> 1
                p = 0
                base = n - wlo
                for i in range(nprimes):
                    q = odd_primes[i]
                    if q > half:
                        break
                    if flags[(base - q) >> 1]:
                        p = q
                        break
                if p == 0:
                    break
            checksum += p
            if p >= max_p:
                max_p = p
                argmax = n
            done += 1
            n += 2
    return n, checksum, max_p, argmax, done


def mark_composites(unsigned char[::1] flags, u64 lo, const u64[::1] odd_primes, Py_ssize_t count):
    cdef Py_ssize_t i, size = flags.shape[0]
    cdef u64 p, start, idx
    with nogil:
        for i in range(count):
            p = odd_primes[i]
            start = p * p
            if start < lo:
                start = (lo + p - 1) // p * p
                if start % 2 == 0:
                    start += p
            idx = (start - lo) >> 1
            while idx < <u64>size:
                flags[idx] = 0
                idx += p
