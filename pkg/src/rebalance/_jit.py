"""Numba switch shared by every hot kernel.

Kernels are written once against the subset of NumPy that numba supports and
decorated with :func:`njit` from this module.  Setting the environment
variable ``REBALANCE_DISABLE_JIT=1`` before import (or running without numba
installed) leaves them as plain Python/NumPy functions.  Both paths consume
random numbers from the same ``numpy.random.Generator`` in the same order.
"""
from __future__ import annotations

import functools
import os

__all__ = ["njit", "NUMBA_ENABLED"]

_disabled = os.environ.get("REBALANCE_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError
    import numba as _numba

    NUMBA_ENABLED = True
except ImportError:
    _numba = None
    NUMBA_ENABLED = False


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` or a transparent no-op decorator."""
    if NUMBA_ENABLED:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)

    def decorator(func):
        @functools.wraps(func)
        def wrapper(*a, **k):
            return func(*a, **k)

        wrapper.py_func = func
        return wrapper

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return decorator(args[0])
    return decorator
