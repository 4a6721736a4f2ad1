"""JIT switch for the numeric kernels.

Every hot kernel in the package is written once in a numba-compatible subset
of Python/numpy and decorated with :func:`njit` from this module.  Setting
``SUBCULL_DISABLE_JIT=1`` in the environment before import turns the
decorator into a no-op, so the very same code runs as plain numpy/Python.
That fallback is slow but useful for debugging and for checking the compiled
path against the interpreted one (``benchmarks/bench_jit.py``).
"""
import os

DISABLE_JIT = os.environ.get("SUBCULL_DISABLE_JIT", "0").lower() not in ("", "0", "false", "no")

if DISABLE_JIT:
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    def set_num_threads(n):
        pass

else:
    import warnings

    import numba

    warnings.filterwarnings("ignore", message="The TBB threading layer")
    # an outdated TBB only produces a warning before numba falls back anyway
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    from numba import prange  # noqa: F401

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        if len(args) == 1 and callable(args[0]) and len(kwargs) == 1:
            return numba.njit(cache=True)(args[0])
        return numba.njit(*args, **kwargs)

    def set_num_threads(n):
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def py_func(fn):
    """Return the interpreted version of a kernel regardless of the JIT flag."""
    return getattr(fn, "py_func", fn)
