"""Backend selection for the resampling kernels.

The compiled module is preferred. Set ``DISTAUDIT_PURE_PYTHON=1`` to force the
numpy fallback (both produce byte-identical images).
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("DISTAUDIT_PURE_PYTHON") == "1":
        raise ImportError("pure-python backend forced")
    from . import _ckernels as _backend
    BACKEND = "cython"
except ImportError:
    _backend = _pykernels
    BACKEND = "python"

BACKENDS = {"python": _pykernels}
if BACKEND == "cython":
    BACKENDS["cython"] = _backend


def _prep(src, idx, w):
    return (
        np.ascontiguousarray(src, dtype=np.float64),
        np.ascontiguousarray(idx, dtype=np.intp),
        np.ascontiguousarray(w, dtype=np.float64),
    )


def separable(src, rows, cols, backend=None):
    """Apply a horizontal then a vertical tap table to an (h, w, c) array.

    ``rows`` and ``cols`` are ``(idx, weights)`` pairs, or None to skip that
    pass. Returns the unrounded float64 result.
    """
    mod = BACKENDS[backend] if backend else _backend
    out = np.ascontiguousarray(src, dtype=np.float64)
    if rows is not None:
        out = mod.apply_taps_rows(*_prep(out, *rows))
    if cols is not None:
        out = mod.apply_taps_cols(*_prep(out, *cols))
    return out


def round_clip_u8(src, backend=None):
    """Round half-up and clamp to [0, 255]."""
    mod = BACKENDS[backend] if backend else _backend
    return mod.round_clip_u8(np.ascontiguousarray(src, dtype=np.float64))
