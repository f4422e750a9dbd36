"""Throughput of the compiled transfer kernel against the numpy fallback.

Usage: ``python3 benchmarks/bench_transfer.py [--slices N] [--repeat R]``
"""

import argparse
import time

import numpy as np

from andloc.models import ModelFamily
from andloc.transfer import TransferConfig, available_backends, propagate

CASES = [("AI", 3, 4, 16.5), ("AI", 3, 8, 16.5), ("AII", 2, 8, 6.0), ("AII", 3, 6, 6.32)]


def time_case(cls, dim, L, W, backend, slices, repeat):
    model = ModelFamily(cls, dim).build(W, L, seed=1)
    config = TransferConfig(energy=0.0, max_slices=slices, min_slices=slices,
                            target_rel_error=0.5, seed=1)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        propagate(model, config, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--slices", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}; {args.slices} slices, best of {args.repeat}")
    print(f"{'class':6} {'dim':>3} {'L':>3} " + " ".join(f"{b + ' [s]':>14}" for b in backends)
          + f" {'speedup':>8}")
    for cls, dim, L, W in CASES:
        times = {b: time_case(cls, dim, L, W, b, args.slices, args.repeat) for b in backends}
        speedup = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{cls:6} {dim:>3} {L:>3} " + " ".join(f"{times[b]:>14.3f}" for b in backends)
              + f" {speedup:>8.2f}")


if __name__ == "__main__":
    main()
