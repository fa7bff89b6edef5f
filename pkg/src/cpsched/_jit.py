"""Numba switch shared by the hot kernels.

Set ``CPSCHED_JIT=0`` in the environment before importing :mod:`cpsched`
to run every kernel through its pure-numpy fallback instead.
"""

import functools
import os

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    nb = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CPSCHED_JIT", "1").lower() not in ("0", "false", "no", "off")

if HAVE_NUMBA:
    njit = functools.partial(nb.njit, cache=True, nogil=True)
else:  # pragma: no cover

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn


def select(jit_fn, numpy_fn):
    """Return the implementation the current process should use."""
    return jit_fn if USE_NUMBA else numpy_fn
