# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for products with diagonally stored (banded) operands.

A banded ``r x c`` matrix ``A`` is stored as ``offsets`` (column minus row of
each stored diagonal) and ``data`` with ``data[d, i] == A[i, i + offsets[d]]``.
Entries of ``data`` that fall outside ``A`` must be zero and are never read.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def band_left(const long[::1] offsets, const double[:, ::1] data,
              const double[:, :] B, Py_ssize_t ncols):
    """Return ``A @ B`` for banded ``A`` of shape ``(data.shape[1], ncols)``."""
    cdef Py_ssize_t nrows = data.shape[1]
    cdef Py_ssize_t p = B.shape[1]
    cdef Py_ssize_t nd = offsets.shape[0]
    cdef Py_ssize_t d, i, j, k, lo, hi
    cdef double a
    out = np.zeros((nrows, p), dtype=np.float64)
    cdef double[:, ::1] C = out
    with nogil:
        for d in range(nd):
            k = offsets[d]
            lo = -k if k < 0 else 0
            hi = ncols - k if ncols - k < nrows else nrows
            for i in range(lo, hi):
                a = data[d, i]
                if a != 0.0:
                    for j in range(p):
                        C[i, j] += a * B[i + k, j]
    return out


def band_right_t(const double[:, :] X, const long[::1] offsets,
                 const double[:, ::1] data, Py_ssize_t ncols):
    """Return ``X @ A.T`` for banded ``A`` of shape ``(data.shape[1], ncols)``."""
    cdef Py_ssize_t nrows = data.shape[1]
    cdef Py_ssize_t p = X.shape[0]
    cdef Py_ssize_t nd = offsets.shape[0]
    cdef Py_ssize_t d, i, j, k, lo, hi
    cdef double a
    out = np.zeros((p, nrows), dtype=np.float64)
    cdef double[:, ::1] C = out
    with nogil:
        for j in range(p):
            for d in range(nd):
                k = offsets[d]
                lo = -k if k < 0 else 0
                hi = ncols - k if ncols - k < nrows else nrows
                for i in range(lo, hi):
                    a = data[d, i]
                    if a != 0.0:
                        C[j, i] += a * X[j, i + k]
    return out
