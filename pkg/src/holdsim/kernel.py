"""Kernel selection: compiled extension when available, numpy fallback otherwise.

Set ``HOLDSIM_FORCE_PY=1`` to force the pure-Python kernel (used by the
benchmark and the kernel-equivalence tests).
"""

from __future__ import annotations

import os

from holdsim import episode_py

if os.environ.get("HOLDSIM_FORCE_PY"):
    _impl = episode_py
    KERNEL_BACKEND = "python"
else:
    try:
        from holdsim import _episode_cy as _impl  # type: ignore[no-redef]

        KERNEL_BACKEND = "cython"
    except ImportError:
        _impl = episode_py
        KERNEL_BACKEND = "python"

STOP_NONE = 0
STOP_TARGET = 1
STOP_FAILURES = 2

process_block = _impl.process_block
