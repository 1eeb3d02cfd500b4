"""Optional numba acceleration.

Hot kernels are written once in a numba-compatible subset of Python and
decorated with :func:`kernel`.  Setting ``WALKNAV_DISABLE_NUMBA=1`` (or running
without numba installed) leaves them as plain Python/numpy functions with
identical semantics, which is handy for debugging and for the benchmark.
"""

import os

_FLAG = os.environ.get("WALKNAV_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if NUMBA_DISABLED:
        raise ImportError
    from numba import njit as _njit
    NUMBA_ENABLED = True
except ImportError:
    _njit = None
    NUMBA_ENABLED = False


def kernel(fn):
    """Compile ``fn`` with ``numba.njit`` unless acceleration is disabled.

    The undecorated function is always reachable as ``fn.py_func`` so callers
    (tests, benchmarks) can run both paths side by side.
    """
    if not NUMBA_ENABLED:
        fn.py_func = fn
        return fn
    return _njit(cache=True, fastmath=False)(fn)
