"""Kernel backend selection.

The compiled extension is preferred; set ``DUELBENCH_PURE_PYTHON=1`` to force
the numpy fallback (useful for debugging and for cross-checking backends).
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if not os.environ.get("DUELBENCH_PURE_PYTHON"):
    try:
        from . import _kernels as kernels  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        pass


def get_kernels(name: str | None = None):
    """Return the kernel module for ``name`` ("compiled" or "python"), or the active one."""
    if name is None or name == BACKEND:
        return kernels
    if name == "python":
        return _pykernels
    from . import _kernels
    return _kernels
