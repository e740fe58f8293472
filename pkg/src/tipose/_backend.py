"""Select between the numba-compiled kernels and their pure-numpy twins.

Set ``TIPOSE_DISABLE_NUMBA=1`` before import to force the numpy path.
"""
import os

_flag = os.environ.get("TIPOSE_DISABLE_NUMBA", "").strip().lower()
DISABLED = _flag in ("1", "true", "yes", "on")

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def decorator(func):
            return func

        return decorator


USE_NUMBA = NUMBA_AVAILABLE and not DISABLED


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
