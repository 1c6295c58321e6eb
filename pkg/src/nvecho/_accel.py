"""Selection between numba-compiled kernels and the pure-numpy fallback.

Set ``NVECHO_NO_NUMBA=1`` to force the numpy path. ``NVECHO_THREADS`` caps
the number of worker threads used by parallel kernels.
"""

import os

_DISABLED = os.environ.get("NVECHO_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba
    from numba import njit, prange

    # the bundled TBB is often too old; prefer OpenMP, then the builtin queue
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def set_threads(n=None):
    """Cap numba worker threads (no-op without numba)."""
    if not HAVE_NUMBA:
        return 1
    if n is None:
        env = os.environ.get("NVECHO_THREADS")
        if not env:
            return numba.get_num_threads()
        n = int(env)
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def backend_name():
    return "numba" if HAVE_NUMBA else "numpy"
