# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled tap-table resampling kernels.

Mirrors ``_pykernels`` sample for sample: every output is accumulated as
``acc = acc + w[k] * v[k]`` for k in tap order, starting from 0.0, so both
backends round identically.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def apply_taps_rows(const double[:, :, ::1] src,
                    const Py_ssize_t[:, ::1] idx,
                    const double[:, ::1] w):
    cdef Py_ssize_t h = src.shape[0], c = src.shape[2]
    cdef Py_ssize_t n_out = idx.shape[0], taps = idx.shape[1]
    out = np.empty((h, n_out, c), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t y, x, ch, k
    cdef double acc
    with nogil:
        for y in range(h):
            for x in range(n_out):
                for ch in range(c):
                    acc = 0.0
                    for k in range(taps):
                        acc = acc + w[x, k] * src[y, idx[x, k], ch]
                    o[y, x, ch] = acc
    return out


def apply_taps_cols(const double[:, :, ::1] src,
                    const Py_ssize_t[:, ::1] idx,
                    const double[:, ::1] w):
    cdef Py_ssize_t wd = src.shape[1], c = src.shape[2]
    cdef Py_ssize_t n_out = idx.shape[0], taps = idx.shape[1]
    out = np.empty((n_out, wd, c), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t y, x, ch, k
    cdef double acc
    with nogil:
        for y in range(n_out):
            for x in range(wd):
                for ch in range(c):
                    acc = 0.0
                    for k in range(taps):
                        acc = acc + w[y, k] * src[idx[y, k], x, ch]
                    o[y, x, ch] = acc
    return out


def round_clip_u8(const double[:, :, ::1] src):
    cdef Py_ssize_t h = src.shape[0], wd = src.shape[1], c = src.shape[2]
    out = np.empty((h, wd, c), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] o = out
    cdef Py_ssize_t y, x, ch
    cdef double v
    with nogil:
        for y in range(h):
            for x in range(wd):
                for ch in range(c):
                    v = floor(src[y, x, ch] + 0.5)
                    if v < 0.0:
                        v = 0.0
                    elif v > 255.0:
                        v = 255.0
                    o[y, x, ch] = <unsigned char>v
    return out
