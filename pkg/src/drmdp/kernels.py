"""Simulation kernel selection.

The compiled kernel is used when it was built and ``DRMDP_PURE_PYTHON`` is
not set to ``1``; otherwise the pure-Python reference implementation runs.
Both consume random numbers in the same order and return identical results.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
run_batch = _kernels_py.run_batch

if os.environ.get("DRMDP_PURE_PYTHON", "") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        BACKEND = "compiled"
        run_batch = _compiled.run_batch


def get_kernel(name: str | None = None):
    """Return ``(name, run_batch)``; ``name`` forces ``"python"`` or ``"compiled"``."""
    if name is None:
        return BACKEND, run_batch
    if name == "python":
        return "python", _kernels_py.run_batch
    if name == "compiled":
        from . import _kernels
        return "compiled", _kernels.run_batch
    raise ValueError(f"unknown kernel {name!r}")
