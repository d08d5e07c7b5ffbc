"""numba switch.

Set ``MARGINNET_DISABLE_NUMBA=1`` to run every kernel through plain numpy.
The kernels are written in the numpy subset numba understands, so both
paths execute the same source.
"""
import os

DISABLED = os.environ.get("MARGINNET_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

ENABLED = numba is not None and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise."""
    if ENABLED:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap
