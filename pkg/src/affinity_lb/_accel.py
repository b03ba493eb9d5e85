"""Backend selection for the numeric kernels.

Kernels are written once as numba-compatible Python.  They are compiled
with ``numba.njit`` unless ``AFFINITY_LB_BACKEND=python`` is set in the
environment (or numba is not importable), in which case the very same
functions run as plain Python on numpy arrays.
"""

import os

BACKEND_ENV = "AFFINITY_LB_BACKEND"

_requested = os.environ.get(BACKEND_ENV, "numba").strip().lower()
if _requested not in ("numba", "python"):
    raise ImportError(f"{BACKEND_ENV} must be 'numba' or 'python', got {_requested!r}")

try:
    if _requested == "numba":
        import numba
    else:
        numba = None
except ImportError:  # pragma: no cover
    numba = None

BACKEND = "numba" if numba is not None else "python"
USE_NUMBA = BACKEND == "numba"


def jit(func):
    """Compile ``func`` with numba when enabled, otherwise return it unchanged."""
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func
