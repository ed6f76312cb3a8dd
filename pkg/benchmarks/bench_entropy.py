"""Compare the compiled and pure-Python entropy kernels.

Runs the arithmetic coder and the run-length Golomb-Rice coder over
representative streams with both backends, checks the outputs are
byte-identical, and prints encode/decode throughput for each.

    python3 benchmarks/bench_entropy.py [--symbols N] [--repeats R]
"""

import argparse
import time

import numpy as np

from splatcodec import entropy


def _streams(n, rng):
    runs = np.repeat(rng.integers(0, 32, size=n), rng.integers(1, 20, size=n))
    sparse = np.rint(rng.laplace(0.0, 1.5, size=n)).astype(np.int64)
    sparse[rng.uniform(size=n) < 0.6] = 0
    return [
        ("ac skewed", "ac", np.minimum(
            rng.geometric(0.3, size=n) - 1, 254).astype(np.int64), 255),
        ("ac runs", "ac", runs[:n].astype(np.int64), 32),
        ("ac uniform", "ac", rng.integers(0, 256, size=n), 256),
        ("rlgr sparse", "rlgr", sparse, None),
        ("rlgr dense", "rlgr",
         np.rint(rng.normal(0.0, 40.0, size=n)).astype(np.int64), None),
    ]


def _time(fn, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return result, best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--symbols", type=int, default=1_000_000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    try:
        compiled = entropy.get_backend("compiled")
    except ImportError:
        print("compiled backend unavailable; nothing to compare")
        return 1
    pure = entropy.get_backend("python")

    rng = np.random.default_rng(0)
    n = args.symbols
    print("%d symbols per stream, best of %d runs" % (n, args.repeats))
    header = "%-12s %-8s %10s %10s %8s %12s" % (
        "stream", "backend", "enc MB/s", "dec MB/s", "ratio", "bytes")
    print(header)
    print("-" * len(header))

    for name, kind, values, alphabet in _streams(n, rng):
        if kind == "ac":
            encode = lambda be, v=values, a=alphabet: be.ac_encode(v, a)
            decode = lambda be, d, a=alphabet: be.ac_decode(d, a)
        else:
            encode = lambda be, v=values: be.rlgr_encode(v)
            decode = lambda be, d: be.rlgr_decode(d)

        outputs = {}
        for label, backend in (("compiled", compiled), ("python", pure)):
            data, enc_s = _time(lambda: encode(backend), args.repeats)
            decoded, dec_s = _time(lambda: decode(backend, data),
                                   args.repeats)
            if not np.array_equal(decoded, values):
                raise AssertionError(
                    "%s backend round trip failed on %r" % (label, name))
            outputs[label] = bytes(data)
            mb = n / 1e6
            print("%-12s %-8s %10.2f %10.2f %8.3f %12d" % (
                name, label, mb / enc_s, mb / dec_s,
                len(data) / values.nbytes, len(data)))
        if outputs["compiled"] != outputs["python"]:
            raise AssertionError("backends disagree on %r" % name)
        print("%-12s byte-identical across backends" % name)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
