"""Optional numba acceleration.

Set ``NETSLAB_DISABLE_NUMBA=1`` to run the hot kernels as plain numpy code.
The flag is read once at import time.
"""

import logging
import os

_DISABLED = os.environ.get("NETSLAB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False


def njit(func=None, **kwargs):
    """``numba.njit`` when available and enabled, identity otherwise."""
    opts = {"cache": True}
    opts.update(kwargs)

    def wrap(f):
        if HAS_NUMBA:
            return numba.njit(**opts)(f)
        return f

    if func is None:
        return wrap
    return wrap(func)
