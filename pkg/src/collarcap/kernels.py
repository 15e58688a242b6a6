"""Selects the compiled kernels when available, else the numpy fallback.

Set ``COLLARCAP_KERNEL=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
iterate = _kernels_py.iterate
ftle = _kernels_py.ftle

if os.environ.get("COLLARCAP_KERNEL", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        iterate = _compiled.iterate
        ftle = _compiled.ftle
