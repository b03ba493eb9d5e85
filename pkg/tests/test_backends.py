"""Both kernel backends must produce the same numbers from the same seeds."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

PROBE = r"""
import json
from affinity_lb import BACKEND, coupling, fluid, simulate
from affinity_lb.model import SelectionFamily

tr = simulate.run(simulate.SimConfig(SelectionFamily.combinatorial(40, 3, 0.9), horizon=5, seed=2))
g = simulate.run(simulate.SimConfig(SelectionFamily.graph([[1], [0, 2], [1]], 0.7), horizon=5))
res = coupling.run_coupling(coupling.jsq_plan(20, 12, 2, 0.9), 2000, seed=3)
ra = coupling.run_coupling(coupling.ra_plan(SelectionFamily.general(3, [[0, 1], [1, 2]], [1, 1])),
                           2000, seed=4)
fl = fluid.integrate(fluid.FluidState.empty(25, 0.8), 3.0)
print(json.dumps({
    "backend": BACKEND,
    "sim": tr.qbar.tolist(), "events": tr.meta["n_events"], "graph": g.qbar.tolist(),
    "couple": [res.violations, res.mean_ref_jobs, res.mean_type_i_jobs],
    "ra": [ra.violations, ra.mean_ref_jobs, ra.mean_type_i_jobs],
    "fluid": fl.qbar[-1].tolist(),
}))
"""


def probe(backend):
    env = dict(os.environ, AFFINITY_LB_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True,
                         check=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def test_python_fallback_matches_numba():
    fast, slow = probe("numba"), probe("python")
    assert fast.pop("backend") == "numba" and slow.pop("backend") == "python"
    assert fast["sim"] == slow["sim"] and fast["events"] == slow["events"]
    assert fast["graph"] == slow["graph"]
    assert fast["couple"] == pytest.approx(slow["couple"], rel=1e-12)
    assert fast["ra"] == pytest.approx(slow["ra"], rel=1e-12)
    assert np.allclose(fast["fluid"], slow["fluid"], rtol=0, atol=1e-12)


def test_unknown_backend_is_rejected():
    env = dict(os.environ, AFFINITY_LB_BACKEND="fortran")
    res = subprocess.run([sys.executable, "-c", "import affinity_lb"], env=env,
                         capture_output=True, text=True, check=False)
    assert res.returncode != 0 and "AFFINITY_LB_BACKEND" in res.stderr
