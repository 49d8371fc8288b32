"""Banded-operand products with a compiled core and a NumPy fallback.

The transition blocks handled by the decomposed filter are tridiagonal or
nearly empty (a coupling block of a tridiagonal model carries a single
nonzero), so products ``A @ X`` and ``X @ A.T`` with such an ``A`` cost
O(bandwidth * size) instead of a full dense product. The covariance blocks
``X`` stay dense.

The compiled extension ``_bandkernels`` is used when it imports; otherwise
(or when ``DDKALMAN_PURE_PYTHON=1`` is set) the NumPy implementation is used.
``BACKEND`` names the active implementation.
"""

import os

import numpy as np

from . import _bandkernels_py

_FORCE_PURE = os.environ.get("DDKALMAN_PURE_PYTHON", "") not in ("", "0")

if _FORCE_PURE:
    _impl = _bandkernels_py
    BACKEND = "python"
else:
    try:
        from . import _bandkernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _bandkernels_py
        BACKEND = "python"

# Above this fraction of stored diagonals a dense BLAS product is faster.
_MAX_BAND_FRACTION = 0.125


class BandMatrix:
    """Diagonal storage of a (possibly rectangular) sparse-banded matrix.

    Parameters
    ----------
    offsets : array of int
        Stored diagonals, ``col - row``.
    data : ndarray, shape (len(offsets), nrows)
        ``data[d, i] = A[i, i + offsets[d]]``; out-of-range slots are zero.
    shape : tuple of int
    """

    __slots__ = ("offsets", "data", "shape", "_impl")

    def __init__(self, offsets, data, shape, impl=None):
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        self._impl = _impl if impl is None else impl

    @classmethod
    def from_dense(cls, A, impl=None):
        A = np.asarray(A, dtype=np.float64)
        r, c = A.shape
        rows, cols = np.nonzero(A)
        offsets = np.unique(cols - rows)
        data = np.zeros((offsets.size, r))
        for d, k in enumerate(offsets):
            lo = max(0, -k)
            hi = min(r, c - k)
            idx = np.arange(lo, hi)
            data[d, lo:hi] = A[idx, idx + k]
        return cls(offsets, data, (r, c), impl=impl)

    @property
    def T(self):
        return BandMatrix.from_dense(self.toarray().T, impl=self._impl)

    def toarray(self):
        r, c = self.shape
        A = np.zeros((r, c))
        for d, k in enumerate(self.offsets):
            lo = max(0, -k)
            hi = min(r, c - k)
            idx = np.arange(lo, hi)
            A[idx, idx + k] = self.data[d, lo:hi]
        return A

    def block(self, rows, cols, zero_cols=None):
        """Sub-matrix ``A[rows, cols]`` kept in band storage.

        ``rows`` and ``cols`` are 0-based slices with unit step. Columns in
        ``zero_cols`` (a slice relative to the block) are set to zero.
        """
        r0, r1, _ = rows.indices(self.shape[0])
        c0, c1, _ = cols.indices(self.shape[1])
        nr, nc = r1 - r0, c1 - c0
        i = np.arange(nr)
        keep_off, keep_data = [], []
        for d, K in enumerate(self.offsets):
            k = int(K) - (c0 - r0)
            vals = self.data[d, r0:r1].copy()
            j = i + k
            mask = (j < 0) | (j >= nc)
            if zero_cols is not None:
                z0, z1, _ = zero_cols.indices(nc)
                mask |= (j >= z0) & (j < z1)
            vals[mask] = 0.0
            if np.any(vals != 0.0):
                keep_off.append(k)
                keep_data.append(vals)
        data = np.array(keep_data) if keep_data else np.zeros((0, nr))
        return BandMatrix(np.array(keep_off, dtype=np.int64), data, (nr, nc), impl=self._impl)

    def __matmul__(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return self._impl.band_left(self.offsets, self.data, X[:, None], self.shape[1])[:, 0]
        return self._impl.band_left(self.offsets, self.data, X, self.shape[1])

    def rmatmul_t(self, X):
        """Return ``X @ self.T``."""
        X = np.asarray(X, dtype=np.float64)
        return self._impl.band_right_t(X, self.offsets, self.data, self.shape[1])

    def __repr__(self):
        return f"BandMatrix(shape={self.shape}, diagonals={self.offsets.size})"


def as_operator(A, impl=None):
    """Return a :class:`BandMatrix` when ``A`` is sparse-banded enough, else ``A``."""
    if isinstance(A, BandMatrix):
        return A
    A = np.asarray(A, dtype=np.float64)
    r, c = A.shape
    rows, cols = np.nonzero(A)
    n_diag = np.unique(cols - rows).size
    if n_diag <= max(3, _MAX_BAND_FRACTION * min(r, c)):
        return BandMatrix.from_dense(A, impl=impl)
    return A


def to_dense(A):
    return A.toarray() if isinstance(A, BandMatrix) else np.asarray(A)


def matmul(A, X):
    """``A @ X`` where ``A`` is a dense array or a :class:`BandMatrix`."""
    return A @ X


def matmul_t(X, A):
    """``X @ A.T`` where ``A`` is a dense array or a :class:`BandMatrix`."""
    if isinstance(A, BandMatrix):
        return A.rmatmul_t(X)
    return X @ A.T


def sandwich(A, X, B):
    """``A @ X @ B.T`` with either outer factor possibly banded."""
    return matmul(A, matmul_t(X, B))
