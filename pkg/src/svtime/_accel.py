"""Optional numba acceleration.

Set ``SVTIME_DISABLE_NUMBA=1`` (or numba's own ``NUMBA_DISABLE_JIT=1``) to force
the pure-numpy kernels. Both paths produce the same numbers up to float
rounding in reductions.
"""
import os

_disabled = os.environ.get("SVTIME_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("disabled by SVTIME_DISABLE_NUMBA")
    import numba

    HAVE_NUMBA = not numba.config.DISABLE_JIT
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when numba is usable, otherwise an identity decorator."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn

