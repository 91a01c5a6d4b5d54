"""Time the compiled and pure-Python kernel backends side by side.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so the comparison does not depend on
``ULTRARANGING_PURE_PYTHON``. Each kernel is checked for agreement before it
is timed.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from ultraranging import _pycore

try:
    from ultraranging import _core
except ImportError:
    _core = None


def cases(rng: np.random.Generator):
    buf = rng.standard_normal(4000)
    ref = rng.standard_normal(480)
    power = rng.exponential(1.0, 19200)
    power[7000:7005] += 400.0
    threshold = 15.0 * float(power.mean())
    return {
        "correlate_direct (4000 x 480)": (
            lambda m: m.correlate_direct(buf, ref),
            lambda a, b: np.allclose(a, b, rtol=0, atol=1e-9),
        ),
        "scan_first_arrival (19200)": (
            lambda m: m.scan_first_arrival(power, threshold, 50, 15),
            lambda a, b: tuple(a) == tuple(b),
        ),
        "gaussian_fill (100000)": (
            lambda m: m.gaussian_fill(12345, 100_000),
            lambda a, b: np.array_equal(a, b),
        ),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3, help="best-of repeats per kernel")
    args = parser.parse_args(argv)
    if _core is None:
        print("compiled extension not built; run: python setup.py build_ext --inplace", file=sys.stderr)
        return 1

    print(f"{'kernel':32s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, (call, agree) in cases(np.random.default_rng(0)).items():
        if not agree(call(_pycore), call(_core)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        py = min(timeit.repeat(lambda: call(_pycore), number=1, repeat=args.repeat))
        cy = min(timeit.repeat(lambda: call(_core), number=1, repeat=args.repeat))
        print(f"{name:32s} {py * 1e3:10.3f} {cy * 1e3:12.3f} {py / cy:7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
