"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Set ``FLOWBYPASS_PURE_PYTHON=1`` to force the
numpy path.
"""
import os

from flowbypass import _kernels_py

if os.environ.get("FLOWBYPASS_PURE_PYTHON") == "1":
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from flowbypass import _kernels_c as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
