"""Numba switch.

Hot kernels exist twice: a compiled loop version and a vectorised numpy
version. Setting ``TLSREFLECT_NO_NUMBA=1`` (or running without numba
installed) selects the numpy versions everywhere.
"""
import os

_FLAG = os.environ.get("TLSREFLECT_NO_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or a no-op decorator without numba."""
    kwargs.setdefault("cache", True)
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


if numba is not None:
    # the bundled TBB is often too old and numba warns on every first launch
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def set_threads(n):
    if n is None or numba is None:
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


def backend():
    return "numba" if USE_NUMBA else "numpy"
