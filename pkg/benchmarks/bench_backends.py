"""Time the numba kernels against the plain-Python fallback on the same workloads.

Each backend runs in a fresh interpreter (the backend is fixed at import
time), once to warm up (JIT compilation, caches) and then timed.

    python3 benchmarks/bench_backends.py [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
from affinity_lb import coupling, fluid, simulate
from affinity_lb.model import SelectionFamily

def sim():
    fam = SelectionFamily.combinatorial(200, 5, 0.8)
    return simulate.run(simulate.SimConfig(fam, horizon=20.0, seed=1)).meta["n_events"]

def couple():
    return coupling.run_coupling(coupling.jsq_plan(50, 31, 2, 0.8), 5000, seed=1).violations

def ode():
    return fluid.integrate(fluid.FluidState.empty(3, 0.8), 5.0).qbar[-1, 0, 0]

jobs = {"simulate": sim, "coupling": couple, "fluid": ode}
repeat = int(sys.argv[1])
out = {}
for name, fn in jobs.items():
    check = fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    out[name] = {"seconds": best, "check": float(check)}
print(json.dumps(out))
"""


def run_backend(backend, repeat):
    env = dict(os.environ, AFFINITY_LB_BACKEND=backend)
    res = subprocess.run([sys.executable, "-c", WORKLOAD, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast = run_backend("numba", args.repeat)
    slow = run_backend("python", args.repeat)
    print(f"{'workload':<10} {'numba s':>10} {'python s':>10} {'speedup':>9}  same result")
    for name in fast:
        a, b = fast[name], slow[name]
        same = a["check"] == b["check"]
        print(f"{name:<10} {a['seconds']:>10.4f} {b['seconds']:>10.4f} "
              f"{b['seconds'] / a['seconds']:>8.1f}x  {'yes' if same else 'NO'}")


if __name__ == "__main__":
    main()
