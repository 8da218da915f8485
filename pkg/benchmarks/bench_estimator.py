"""Times the compiled jitter-estimator kernel against its pure-Python twin.

Both implementations consume the same bursty arrival stream; the run aborts
if their outputs differ anywhere, so the speedup number always describes two
bit-identical estimators.

Usage: python benchmarks/bench_estimator.py [--n 200000] [--seed 0]
"""

import argparse
import sys
import time

import numpy as np

from relaysim._estimator_py import JitterEstimator as PyEstimator

try:
    from relaysim._estimator_cy import JitterEstimator as CyEstimator
except ImportError:
    CyEstimator = None


def bursty_stream(rng, n, interval_ms=10.0, base_ms=50.0):
    ts = np.arange(n) * interval_ms
    transit = base_ms + rng.gamma(2.0, 3.0, n)
    i = 0
    while i < n:
        if rng.random() < 0.01:
            width = int(rng.integers(5, 40))
            transit[i:i + width] += rng.uniform(50.0, 400.0)
            i += width
        else:
            i += 1
    arrival = ts + transit
    order = np.argsort(arrival, kind="stable")
    return list(zip(ts[order].tolist(), arrival[order].tolist()))


def drive(estimator_cls, stream):
    est = estimator_cls()
    lags = []
    t0 = time.perf_counter()
    for ts, arrival in stream:
        lags.append(est.update(ts, arrival))
    elapsed = time.perf_counter() - t0
    return elapsed, lags, est


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=200_000, help="stream length")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    stream = bursty_stream(np.random.default_rng(args.seed), args.n)
    py_time, py_lags, py_est = drive(PyEstimator, stream)
    print(f"python  {args.n / py_time:10.0f} updates/s  ({py_time:.3f}s)")

    if CyEstimator is None:
        print("compiled kernel not built; nothing to compare")
        return 1

    cy_time, cy_lags, cy_est = drive(CyEstimator, stream)
    print(f"cython  {args.n / cy_time:10.0f} updates/s  ({cy_time:.3f}s)")

    if py_lags != cy_lags:
        diff = next(i for i, (a, b) in enumerate(zip(py_lags, cy_lags)) if a != b)
        print(f"MISMATCH at update {diff}: python {py_lags[diff]!r} "
              f"vs cython {cy_lags[diff]!r}", file=sys.stderr)
        return 2
    if (py_est.transit_target() != cy_est.transit_target()
            or py_est.n_window != cy_est.n_window):
        print("MISMATCH in final estimator state", file=sys.stderr)
        return 2

    print(f"outputs identical over {args.n} updates; speedup x{py_time / cy_time:.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
