"""Kernel acceleration plumbing.

Hot numeric kernels in this package are written as numba-compatible
functions and compiled with ``@njit`` by default. Setting the environment
variable ``VECSIM_NUMBA=0`` (before import) selects a pure-NumPy/Python
fallback path that runs the exact same code uncompiled. The fallback is
slow but bit-identical, which keeps the whole suite runnable where numba
is unavailable and lets the benchmark CLI compare both paths.
"""

from __future__ import annotations

import os
import warnings

_flag = os.environ.get("VECSIM_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "off", "no")

if _requested:
    # The bundled TBB is too old on some images; prefer OpenMP to avoid a
    # warning-and-fallback on import.
    os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp tbb workqueue")
    try:
        import numba

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba = None
        NUMBA_ENABLED = False
        warnings.warn("numba not importable; falling back to pure-python kernels")
else:
    numba = None
    NUMBA_ENABLED = False


def jit(*, parallel: bool = False):
    """Return the kernel decorator for the active path.

    Compiled path: ``numba.njit(cache=True)``. Fallback path: identity.
    """
    if NUMBA_ENABLED:
        return numba.njit(cache=True, parallel=parallel)
    return lambda fn: fn


def prange(n: int):
    """Loop range that parallelizes under numba and degrades to ``range``."""
    return range(n)


if NUMBA_ENABLED:
    prange = numba.prange  # noqa: F811


def python_impl(fn):
    """Return the uncompiled python implementation behind a kernel."""
    return getattr(fn, "py_func", fn)
