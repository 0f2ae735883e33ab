"""Kernel backend selection: numba JIT by default, pure numpy on request.

Set ``BELTFORGE_NUMBA=0`` (or ``false``/``no``/``off``) before import to run
every hot kernel as plain interpreted numpy code. The flag is read once at
import time because the decorator is applied when :mod:`beltforge.kernels`
loads.
"""

import os

_flag = os.environ.get("BELTFORGE_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

if _requested:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def maybe_njit(*args, **kwargs):
    """``numba.njit`` when the numba backend is active, identity otherwise.

    Usable bare (``@maybe_njit``) or parameterized (``@maybe_njit(cache=True)``).
    """
    if NUMBA_ENABLED:
        return _njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def _identity(fn):
        return fn

    return _identity


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
