"""Optional numba acceleration.

Set ``FRISLAB_DISABLE_JIT=1`` to force the pure-numpy code paths even when
numba is importable.
"""
import os

_disabled = os.environ.get("FRISLAB_DISABLE_JIT", "0").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    import numba
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f
    return wrap
