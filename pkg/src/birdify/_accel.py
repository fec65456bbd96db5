"""Numba switch.

Set ``BIRDIFY_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag is
read once at import time; :func:`set_numba` flips it for benchmarks and tests.
"""
import os

try:
    import numba  # noqa: F401
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def _env_disabled():
    return os.environ.get("BIRDIFY_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def set_numba(enabled: bool) -> bool:
    """Select the kernel backend at runtime; returns the previous setting."""
    global USE_NUMBA
    prev = USE_NUMBA
    USE_NUMBA = bool(enabled) and HAVE_NUMBA
    return prev


def numba_enabled() -> bool:
    return USE_NUMBA
