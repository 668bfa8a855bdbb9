"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementations are. Setting ``EPRSTEER_BACKEND=python`` forces the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
kernels = _fallback

if os.environ.get("EPRSTEER_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "compiled"


def get_kernels(name=None):
    """Return the kernel namespace for ``name`` ('compiled', 'python' or None)."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernels as compiled
        return compiled
    raise ValueError(f"unknown backend {name!r}")
