"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The active backend is picked once at import time: numba when it is installed
and ``SN_DISABLE_JIT`` is unset, numpy otherwise. Both backends stay
importable through :func:`get_backend` so they can be benchmarked and
cross-checked side by side.
"""
from types import ModuleType

from .._jit import HAS_NUMBA, JIT_ENABLED
from . import _numpy as numpy_backend

if HAS_NUMBA:
    from . import _numba as numba_backend
else:  # pragma: no cover
    numba_backend = None

active: ModuleType = numba_backend if JIT_ENABLED else numpy_backend

BACKEND = active.NAME


def get_backend(name: str | None = None) -> ModuleType:
    """Return the backend module called ``name`` (default: the active one)."""
    if name is None:
        return active
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        if numba_backend is None:
            raise RuntimeError("numba backend requested but numba is not installed")
        return numba_backend
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    return ["numpy"] + (["numba"] if numba_backend is not None else [])


prf_uniform = active.prf_uniform
diffuse_decay = active.diffuse_decay
deposit_diffuse_decay = active.deposit_diffuse_decay
physarum_agents = active.physarum_agents
termite_agents = active.termite_agents
boid_steer_naive = active.boid_steer_naive
boid_steer_grid = active.boid_steer_grid
block_sums = active.block_sums
