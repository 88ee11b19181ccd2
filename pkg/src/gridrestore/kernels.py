"""Select the compiled search kernel when available, else the pure-Python one.

Set ``GRIDRESTORE_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

python_kernels = _pykernels
compiled_kernels = None

if not os.environ.get("GRIDRESTORE_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None

BACKEND = "cython" if compiled_kernels is not None else "python"


def get(backend: str | None = None, n_edges: int = 0):
    """Kernel module for ``backend`` ('cython', 'python' or None for the default)."""
    if backend == "python":
        return python_kernels
    if backend == "cython":
        if compiled_kernels is None:
            raise RuntimeError("compiled kernels are not available")
        return compiled_kernels
    if compiled_kernels is not None and n_edges <= compiled_kernels.MAX_EDGES:
        return compiled_kernels
    return python_kernels
