"""Benchmark the compiled hypergeometric kernel against the pure-Python one.

Run as a script: python benchmarks/bench_kernels.py
Both backends are imported directly, so the comparison works regardless of
which one the package selected at import time.
"""

import statistics
import time

import numpy as np

from bayesmm._kernels import _hyp2f1_py

try:
    from bayesmm._kernels import _hyp2f1 as compiled
except ImportError:
    compiled = None

CASES = [
    # (a, b, c, z): posterior-shaped calls, mild through extreme
    (1.0, 41.0, 11.0, 0.3),
    (1.0, 41.0, 11.0, 0.9),
    (0.5, 400.0, 21.0, 0.99),
    (2.0, 1000.0, 12.0, 0.999),
    (5.0, 40.0, 25.0, 0.5),
    (0.5, 10000.0, 1.5, 0.999),
]


def time_backend(core, reps: int = 200) -> float:
    times = []
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(reps):
            for a, b, c, z in CASES:
                core(a, b, c, z)
        times.append((time.perf_counter() - t0) / (reps * len(CASES)))
    return statistics.median(times) * 1e6


def main() -> None:
    py_us = time_backend(_hyp2f1_py.log_2f1_core)
    print(f"pure python : {py_us:9.2f} us/call")
    if compiled is None:
        print("compiled    : not available (package falls back to python)")
        return
    c_us = time_backend(compiled.log_2f1_core)
    print(f"compiled    : {c_us:9.2f} us/call")
    print(f"speedup     : {py_us / c_us:9.1f}x")

    worst = 0.0
    for a, b, c, z in CASES:
        pv = _hyp2f1_py.log_2f1_core(a, b, c, z)
        cv = compiled.log_2f1_core(a, b, c, z)
        worst = max(worst, abs(pv - cv) / max(abs(pv), 1.0))
    print(f"agreement   : {worst:9.2e} worst relative gap")

    rng = np.random.default_rng(0)
    worst_r = 0.0
    for _ in range(500):
        a = rng.uniform(0.2, 30.0)
        b = rng.uniform(0.5, 2000.0)
        c = a + rng.uniform(0.5, 40.0)
        z = rng.uniform(0.0, 0.999)
        pv = _hyp2f1_py.log_2f1_core(a, b, c, z)
        cv = compiled.log_2f1_core(a, b, c, z)
        worst_r = max(worst_r, abs(pv - cv) / max(abs(pv), 1.0))
    print(f"random      : {worst_r:9.2e} worst relative gap over 500 draws")


if __name__ == "__main__":
    main()
