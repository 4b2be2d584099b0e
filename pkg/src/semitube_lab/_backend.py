"""Kernel backend selection.

Set ``SEMITUBE_LAB_NO_NUMBA=1`` to force the pure-numpy kernels. When numba is
not importable the numpy path is used silently. ``SEMITUBE_LAB_THREADS`` sets
the numba thread count.
"""

from __future__ import annotations

import os

_TRUTHY = {"1", "true", "yes", "on"}


def _numba_requested() -> bool:
    return os.environ.get("SEMITUBE_LAB_NO_NUMBA", "").strip().lower() not in _TRUTHY


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and _numba_requested()

if USE_NUMBA and os.environ.get("SEMITUBE_LAB_THREADS"):
    _numba.set_num_threads(int(os.environ["SEMITUBE_LAB_THREADS"]))


def njit(*args, **kwargs):
    """``numba.njit`` when numba is available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
