"""Compare the compiled and pure-Python scan kernels on the same ranges.

    python3 benchmarks/bench_kernel.py [--repeat N]
"""
import argparse
import json
import time

from goldgrid.goldbach import GoldbachRange, verify_range
from goldgrid.goldbach.kernel import BACKEND

CASES = [
    ("small", GoldbachRange(4, 10**5)),
    ("million", GoldbachRange(4, 10**6)),
    ("far", GoldbachRange(10**12, 10**12 + 2 * 10**4)),
]


def best_of(rng, backend, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = verify_range(rng, backend=backend)
        times.append(time.perf_counter() - t0)
    return min(times), result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if BACKEND != "cython":
        print(json.dumps({"error": "compiled kernel not built; run pip install -e . --no-build-isolation"}))
        return 1
    rows = []
    for name, rng in CASES:
        fast, a = best_of(rng, "cython", args.repeat)
        slow, b = best_of(rng, "python", 1)
        if a != b:
            raise SystemExit(f"backends disagree on {name}: {a} vs {b}")
        rows.append({
            "case": name, "evens": rng.evens, "cython_s": round(fast, 4), "python_s": round(slow, 4),
            "speedup": round(slow / fast, 1), "cython_evens_per_s": round(rng.evens / fast),
        })
    for row in rows:
        print(json.dumps(row))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
