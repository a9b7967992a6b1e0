"""Compare the compiled and pure-Python simulation kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--events 200000] [--repeat 3]

Reports events per second for MAP path sampling and for the controlled
inventory simulation on each available backend, plus the speedup.
"""
import argparse
import time

from mapctl import _kernels
from mapctl.ldqbd import ThresholdPolicy
from mapctl.mapcore import preset
from mapctl.qbd import CostParameters
from mapctl.repro import table_system
from mapctl.sim import SimulationConfig, sample_map_path, simulate_system


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    mp = preset("t31-neg-hi")
    arrival, service = table_system("3.2")
    policy = ThresholdPolicy((16, 10, 11))
    costs = CostParameters(1.0, 5.0)
    cfg = SimulationConfig(horizon=args.events, seed=1)
    cases = {
        "map_path": lambda b: sample_map_path(mp, args.events, seed=1, backend=b),
        "inventory": lambda b: simulate_system(arrival, service, policy, costs, cfg, backend=b),
    }

    print(f"{'kernel':<10} {'backend':<8} {'events/s':>14}")
    for name, run in cases.items():
        rates = {}
        for backend in _kernels.available():
            elapsed = _best(lambda: run(backend), args.repeat)
            rates[backend] = args.events / elapsed
            print(f"{name:<10} {backend:<8} {rates[backend]:>14,.0f}")
        if len(rates) == 2:
            print(f"{name:<10} speedup  {rates['cython'] / rates['python']:>14.1f}x")


if __name__ == "__main__":
    main()
