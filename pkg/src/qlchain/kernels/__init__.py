"""Integrand backends.

The compiled extension is used when it imports; ``QLCHAIN_PURE_PYTHON=1``
forces the pure-Python fallback.
"""

from __future__ import annotations

import ctypes
import os

from scipy import LowLevelCallable

from . import _pykernels

__all__ = ["BACKEND", "make_integrand", "spectrum"]

_ext = None
if os.environ.get("QLCHAIN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _ext
    except ImportError:  # pragma: no cover - depends on the build
        _ext = None

BACKEND = "cython" if _ext is not None else "python"


def spectrum(w: float, gamma: float, cutoff: float, T: float, classical: bool) -> float:
    if _ext is not None:
        return _ext.spectrum(w, gamma, cutoff, T, classical)
    return _pykernels.spectrum(w, gamma, cutoff, T, classical)


def make_integrand(params, backend: str | None = None):
    """Scalar integrand over omega for ``scipy.integrate.quad``.

    Returns a LowLevelCallable (compiled) or a Python closure.
    """
    backend = backend or BACKEND
    if backend == "cython":
        if _ext is None:
            raise RuntimeError("compiled kernels are not available")
        buf = (ctypes.c_double * len(params))(*map(float, params))
        # ctypes.cast keeps a reference to buf, so the buffer lives with the callable
        ptr = ctypes.cast(buf, ctypes.c_void_p)
        return LowLevelCallable.from_cython(_ext, "pole_integrand", ptr)
    p = tuple(float(x) for x in params)
    return lambda w: _pykernels.pole_integrand(w, p)
