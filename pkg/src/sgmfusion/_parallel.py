"""Numba JIT helpers and worker-count control."""

import os

import numba

# the bundled TBB is too old for numba; omp/workqueue are always usable
if os.environ.get("NUMBA_THREADING_LAYER") is None:
    numba.config.THREADING_LAYER = "omp"

njit = numba.njit(cache=True, nogil=True)
pjit = numba.njit(cache=True, nogil=True, parallel=True)

#: environment variable capping the number of worker threads
THREADS_ENV = "FUSION_THREADS"


def set_threads(n=None):
    """Cap numba's worker pool; ``None`` reads FUSION_THREADS. Returns the count in effect."""
    if n is None:
        env = os.environ.get(THREADS_ENV)
        n = int(env) if env else None
    if n is not None:
        n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
    return numba.get_num_threads()
