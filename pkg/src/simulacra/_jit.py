"""Backend switch for the compiled kernels.

Set ``SN_DISABLE_JIT=1`` to force the pure-numpy code paths even when numba
is importable.
"""
import os

_FALSY = ("", "0", "false", "no", "off")

JIT_DISABLED = os.environ.get("SN_DISABLE_JIT", "").strip().lower() not in _FALSY

try:
    import numba as nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None

HAS_NUMBA = nb is not None
JIT_ENABLED = HAS_NUMBA and not JIT_DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is present, otherwise the identity decorator."""
    if nb is not None:
        return nb.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda func: func
