"""Compositing-kernel backend selection.

The numba kernels are the default; set ``SPLATVO_BACKEND=numpy`` to force the
pure-numpy fallback (or ``numba`` to require numba and fail loudly if it is
missing).  The variable is read on every call so tests can flip it at runtime.
"""

from __future__ import annotations

import os

from . import kernels_numpy

ENV_VAR = "SPLATVO_BACKEND"

try:
    from . import kernels_numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    kernels_numba = None
    HAVE_NUMBA = False


def active_backend(override: str | None = None) -> str:
    choice = (override or os.environ.get(ENV_VAR, "") or "auto").strip().lower()
    if choice in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if choice not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {choice!r}; expected 'numba' or 'numpy'")
    if choice == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return choice


def get_kernels(override: str | None = None):
    return kernels_numba if active_backend(override) == "numba" else kernels_numpy
