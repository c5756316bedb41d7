"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
implementation is used. Set ``HYBRIDSIZER_BACKEND=python`` to force the
fallback.
"""
from __future__ import annotations

import logging
import os

import numpy as np

from . import _kernels_py
from ._kernels_py import (COL, MODE_COLOCATED, MODE_HYBRID, N_COLS, OBS_DIM, PARAM_FIELDS, TRACE_COLUMNS,
                          params_vector, raise_on_fault)

logger = logging.getLogger(__name__)

_BACKENDS = {"python": _kernels_py}
try:
    from . import _kernels_cy
except ImportError:  # extension not built
    _kernels_cy = None
else:
    _BACKENDS["cython"] = _kernels_cy


def get_backend(name: str | None = None):
    """Return the kernel module ``name`` (``"cython"`` or ``"python"``), default the fastest available."""
    if name is None:
        name = os.environ.get("HYBRIDSIZER_BACKEND") or ("cython" if "cython" in _BACKENDS else "python")
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(_BACKENDS)}") from None


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


backend = get_backend()
BACKEND = backend.BACKEND


def rollout_mlp(*args, backend_name: str | None = None):
    kb = backend if backend_name is None else get_backend(backend_name)
    return kb.rollout_mlp(*args)


def step_batch(*args, backend_name: str | None = None) -> np.ndarray:
    kb = backend if backend_name is None else get_backend(backend_name)
    return kb.step_batch(*args)


__all__ = ["COL", "MODE_COLOCATED", "MODE_HYBRID", "N_COLS", "OBS_DIM", "PARAM_FIELDS", "TRACE_COLUMNS",
           "BACKEND", "available_backends", "get_backend", "params_vector", "raise_on_fault",
           "rollout_mlp", "step_batch"]
