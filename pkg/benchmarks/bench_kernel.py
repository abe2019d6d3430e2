"""Time the compiled backtest kernel against the pure-Python loop.

    python benchmarks/bench_kernel.py [--days 2520] [--assets 10] [--repeat 5]

Both backends run on identical random inputs; the script checks their
outputs match bit for bit before reporting timings.
"""

import argparse
import statistics
import time

import numpy as np

from advnews import kernel


def inputs(days, assets, seed=0):
    rng = np.random.default_rng(seed)
    closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, (days, assets)), axis=0))
    opens = closes * np.exp(rng.normal(0, 0.005, (days, assets)))
    decisions = rng.choice(np.array([-1, 0, 1], dtype=np.int8), (days, assets))
    return decisions, opens, closes


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--days", type=int, default=2520)
    p.add_argument("--assets", type=int, default=10)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    dec, opens, closes = inputs(args.days, args.assets)
    call = (dec, opens, closes, 0.1, 0.0002, 0.005, 1_000_000.0, False)
    py_best, py_med, py_out = best_of(kernel.py_simulate, call, args.repeat)
    print(f"{args.days} days x {args.assets} assets, best of {args.repeat}")
    print(f"python  best {py_best * 1e3:9.2f} ms  median {py_med * 1e3:9.2f} ms")
    if kernel.c_simulate is None:
        print("cython  not built (run `pip install -e . --no-build-isolation`)")
        return 0
    c_best, c_med, c_out = best_of(kernel.c_simulate, call, args.repeat)
    print(f"cython  best {c_best * 1e3:9.2f} ms  median {c_med * 1e3:9.2f} ms")
    same = all(np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b
               for a, b in zip(py_out, c_out))
    print(f"speedup {py_best / c_best:.1f}x  outputs identical: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
