"""Numba switch.

Set ``ENGAGEKIT_DISABLE_NUMBA=1`` to run the pure-numpy fallback kernels
instead of the compiled ones. The flag is read once, at import time.
"""
import os

_disabled = os.environ.get("ENGAGEKIT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not _disabled


def njit(func=None, **options):
    """``numba.njit(cache=True)`` when available, otherwise a no-op decorator."""
    options.setdefault("cache", True)

    def wrap(f):
        if numba is None:
            return f
        return numba.njit(**options)(f)

    if func is None:
        return wrap
    return wrap(func)
