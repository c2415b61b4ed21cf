"""Pick the hot kernels at import: compiled if built, else pure Python.

Set ``GOLDGRID_PURE=1`` to force the fallback.
"""
import os
from array import array

from goldgrid.goldbach import _pykernel

try:
    if os.environ.get("GOLDGRID_PURE"):
        raise ImportError("pure backend requested")
    from goldgrid.goldbach import _ckernel as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernel
    BACKEND = "python"

scan_evens = _impl.scan_evens
mark_composites = _impl.mark_composites


def prime_vector(primes, backend=None):
    """Container for odd primes in the layout the kernel expects."""
    if (backend or BACKEND) == "cython":
        return array("Q", primes)
    return list(primes)


def get_scan(backend=None):
    if backend is None:
        return scan_evens
    if backend == "python":
        return _pykernel.scan_evens
    if backend == "cython":
        from goldgrid.goldbach import _ckernel

        return _ckernel.scan_evens
    raise ValueError(f"unknown backend {backend!r}")
