"""JIT-compilation shim.

Hot numeric kernels are compiled with numba when it is importable and the
``POPALLOC_NO_NUMBA`` environment variable is unset.  Otherwise the decorated
functions run as plain Python/numpy, which keeps the package usable (just
slower) without a compiler.  ``benchmarks/bench_solver.py`` compares the two
paths.
"""

import os

NUMBA_ENABLED = False

if not os.environ.get("POPALLOC_NO_NUMBA"):
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:
        pass

if NUMBA_ENABLED:
    def njit(func=None, **kwargs):
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        if func is None:
            return _njit(**kwargs)
        return _njit(**kwargs)(func)
else:
    def njit(func=None, **kwargs):
        if func is None:
            return lambda f: f
        return func

__all__ = ["njit", "NUMBA_ENABLED"]
