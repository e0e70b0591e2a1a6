"""numba switch.

Kernels are written once in numba-compatible numpy and decorated with
:func:`njit`. Setting ``CONFTREE_DISABLE_NUMBA=1`` (or running without numba
installed) turns the decorator into a no-op so the same source runs as plain
numpy. The flag is read at import time.
"""
from __future__ import annotations

import os

_flag = os.environ.get("CONFTREE_DISABLE_NUMBA", "").strip().lower()
DISABLED = _flag not in ("", "0", "false", "no")

try:
    if DISABLED:
        raise ImportError
    import numba as _numba
except ImportError:
    _numba = None

NUMBA_ENABLED = _numba is not None


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    if _numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba.njit(*args, **kwargs)


def py_func(kernel):
    """Undecorated python/numpy version of a kernel (for benchmarks and tests)."""
    return getattr(kernel, "py_func", kernel)
