"""Pure-NumPy fallback for the compiled band kernels.

Same storage convention and signatures as ``_bandkernels.pyx``; the diagonal
accumulation order is identical so both backends agree to round-off.
"""

import numpy as np


def _row_range(k, nrows, ncols):
    lo = -k if k < 0 else 0
    hi = min(nrows, ncols - k)
    return lo, hi


def band_left(offsets, data, B, ncols):
    nrows = data.shape[1]
    B = np.asarray(B, dtype=np.float64)
    out = np.zeros((nrows, B.shape[1]))
    for d, k in enumerate(offsets):
        lo, hi = _row_range(int(k), nrows, ncols)
        if hi > lo:
            out[lo:hi] += data[d, lo:hi, None] * B[lo + k:hi + k]
    return out


def band_right_t(X, offsets, data, ncols):
    nrows = data.shape[1]
    X = np.asarray(X, dtype=np.float64)
    out = np.zeros((X.shape[0], nrows))
    for d, k in enumerate(offsets):
        lo, hi = _row_range(int(k), nrows, ncols)
        if hi > lo:
            out[:, lo:hi] += X[:, lo + k:hi + k] * data[d, lo:hi]
    return out
