"""Kernel backend selection.

``INITIATIVE_BACKEND=numpy`` forces the vectorized numpy path; the default is
numba when it imports. Selection happens once, at import time.
"""
import os

BACKEND_ENV = "INITIATIVE_BACKEND"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_requested = os.environ.get(BACKEND_ENV, "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {_requested!r}")

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and _requested == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kws):
    """``numba.njit(cache=True)`` when numba is importable, otherwise a no-op.

    Kernels are always compiled when numba is present, even under the numpy
    backend, so tests and benchmarks can compare both paths.
    """
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kws.setdefault("cache", True)
    return numba.njit(*args, **kws)


def set_threads(n):
    """Cap numba's worker pool. The shipped kernels are serial, so 1 is a no-op."""
    if numba is None or n is None or int(n) <= 1:
        return
    numba.config.THREADING_LAYER = "workqueue"
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
