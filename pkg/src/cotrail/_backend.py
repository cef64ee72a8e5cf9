"""Kernel backend selection.

The compiled extension (``cotrail._kernels``) is preferred; the pure-Python
kernels are used when it is missing or when ``COTRAIL_PURE_PYTHON`` is set
to a non-empty value in the environment.
"""

from __future__ import annotations

import os


def _load():
    if os.environ.get("COTRAIL_PURE_PYTHON"):
        from cotrail import _kernels_py
        return _kernels_py
    try:
        from cotrail import _kernels  # type: ignore[attr-defined]
        return _kernels
    except ImportError:
        from cotrail import _kernels_py
        return _kernels_py


kernels = _load()


def kernel_backend() -> str:
    """Name of the active kernel backend: "compiled" or "python"."""
    return kernels.BACKEND
