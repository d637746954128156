"""Compare the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from incstab import cases, kernels, sim
from incstab.certify import SamplingPlan, certify
from incstab.measure import mu_batch


def workloads():
    ic = cases.load_case("case1")
    mats = np.random.default_rng(0).uniform(-5, 5, (20000, 4, 4))
    one = {"x1": 1.0, "x2": 1.0}
    var = sim.SimConfig("regularized", 0, 3, 1e-3, 1e-3, "sine", one, one)
    event = sim.SimConfig("event", 0, 3, 1e-3, x0={"x1": -0.8, "x2": 1.5})
    plan = SamplingPlan(grid=64, samples=1000, seed=42)
    return {
        "mu_batch 20000x4x4 (2-norm)": lambda: mu_batch(mats, "2"),
        "certify case1 (grid 64)": lambda: certify(ic, "2", plan),
        "variational run, 3000 steps": lambda: sim.integrate_variational(ic, var),
        "event run, 3000 steps": lambda: sim.integrate_event(ic, event),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled kernels not built; timing the Python fallback only")
    rows = {}
    for name in backends:
        previous = kernels.set_backend(name)
        try:
            for label, fn in workloads().items():
                fn()
                rows.setdefault(label, {})[name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        finally:
            kernels.set_backend(previous)
    print(f"{'workload':32s} {'python [s]':>12s} {'compiled [s]':>13s} {'speedup':>8s}")
    for label, t in rows.items():
        py, c = t.get("python"), t.get("compiled")
        comp = f"{c:13.4f}" if c is not None else f"{'-':>13s}"
        speed = f"{py / c:7.1f}x" if c else f"{'-':>8s}"
        print(f"{label:32s} {py:12.4f} {comp} {speed}")


if __name__ == "__main__":
    main()
