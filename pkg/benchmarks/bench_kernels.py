"""Compiled vs pure-Python kernels, and fast-forward vs cycle-by-cycle runs.

    python benchmarks/bench_kernels.py [--repeat N] [--skip-runs]
"""
import argparse
import time

import numpy as np

from qlinksim import _kernels_py as pure
from qlinksim.harness import config as cfg
from qlinksim.harness.runner import run_scenario
from qlinksim.rng import stream_key

try:
    from qlinksim import _kernels as compiled
except ImportError:
    compiled = None


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def kernel_cases():
    key = stream_key(0, "herald")
    keys = np.array([stream_key(0, n) for n in ("herald", "loss:A>H:attempt", "loss:B>H:attempt")], dtype=np.uint64)
    thr = np.array([1e-7, 1e-9, 1e-9])
    grid = np.arange(0, 2_000_000, 1, dtype=np.int64)
    return {
        "uniforms (1e6)": lambda impl: impl.uniforms(key, grid[:1_000_000]),
        "first_hit (3 streams, 2e6 cycles)": lambda impl: impl.first_hit(keys, thr, grid),
        "first_below_range (1e7 cycles)": lambda impl: impl.first_below_range(key, 0, 10_000_000, 1e-9),
    }


def bench_kernels(repeat):
    print(f"{'kernel':<36}{'pure [ms]':>12}{'compiled [ms]':>15}{'speedup':>10}")
    for name, case in kernel_cases().items():
        tp = best_of(lambda: case(pure), repeat)
        if compiled is None:
            print(f"{name:<36}{tp * 1e3:>12.1f}{'n/a':>15}")
            continue
        tc = best_of(lambda: case(compiled), repeat)
        print(f"{name:<36}{tp * 1e3:>12.1f}{tc * 1e3:>15.2f}{tp / tc:>9.1f}x")


def bench_runs():
    wl = cfg.usage_pattern("Uniform", 0.99)
    print(f"\n{'scenario':<36}{'stepped [s]':>12}{'fast-fwd [s]':>15}{'speedup':>10}")
    for preset, duration in (("Lab", 2.0), ("QLink", 10.0)):
        times = {}
        for ff in (False, True):
            scn = cfg.ScenarioConfig(preset=preset, seed=0, duration_s=duration, fast_forward=ff)
            t = time.perf_counter()
            run_scenario(scn, wl)
            times[ff] = time.perf_counter() - t
        name = f"{preset} Uniform, {duration:g} s simulated"
        print(f"{name:<36}{times[False]:>12.2f}{times[True]:>15.2f}{times[False] / times[True]:>9.1f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-runs", action="store_true", help="only time the kernels")
    args = ap.parse_args()
    bench_kernels(args.repeat)
    if not args.skip_runs:
        bench_runs()


if __name__ == "__main__":
    main()
