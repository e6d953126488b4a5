"""Optional numba acceleration.

Set ``ICS5GSIM_NO_JIT=1`` to run every kernel as plain Python/numpy. Both paths
execute the same source, so results are bit-identical.
"""

import os

JIT_ENABLED = os.environ.get("ICS5GSIM_NO_JIT", "").strip().lower() not in ("1", "true", "yes")

if JIT_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        JIT_ENABLED = False

if not JIT_ENABLED:

    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrapper(f):
            return f

        return wrapper


__all__ = ["JIT_ENABLED", "njit"]
