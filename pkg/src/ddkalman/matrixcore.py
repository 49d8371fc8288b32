"""Index sets, restriction/extension operators and the SPD solve.

All index sets are 1-based and contiguous, matching the way subdomains are
described (``I1 = {1, ..., n1}``); conversion to NumPy slices happens here
and nowhere else.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, NotPositiveDefiniteError, ShapeError

SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class IndexSet:
    """Contiguous 1-based index range ``{first, ..., last}``.

    An empty set is represented with ``last == first - 1``.
    """

    first: int
    last: int

    def __post_init__(self):
        if self.first < 1:
            raise DimensionError(f"index sets are 1-based, got first={self.first}")
        if self.last < self.first - 1:
            raise DimensionError(f"invalid range {self.first}..{self.last}")

    @classmethod
    def span(cls, first, count):
        return cls(first, first + count - 1)

    @classmethod
    def from_positions(cls, positions):
        pos = [int(p) for p in positions]
        if not pos:
            return cls(1, 0)
        if any(b - a != 1 for a, b in zip(pos, pos[1:])):
            raise DimensionError("index set must be strictly increasing and contiguous")
        return cls(pos[0], pos[-1])

    def __len__(self):
        return self.last - self.first + 1

    def __iter__(self):
        return iter(range(self.first, self.last + 1))

    def __contains__(self, i):
        return self.first <= i <= self.last

    @property
    def slice(self):
        """0-based slice selecting this set from an array axis."""
        return slice(self.first - 1, self.last)

    @property
    def positions(self):
        return np.arange(self.first, self.last + 1)

    def intersection(self, other):
        lo = max(self.first, other.first)
        hi = min(self.last, other.last)
        return IndexSet(lo, hi) if hi >= lo else IndexSet(lo, lo - 1)

    def difference(self, other):
        """``self minus other`` for sets whose difference is contiguous."""
        inter = self.intersection(other)
        if len(inter) == 0:
            return self
        if inter.first == self.first:
            return IndexSet(inter.last + 1, self.last)
        if inter.last == self.last:
            return IndexSet(self.first, inter.first - 1)
        raise DimensionError("difference of index sets is not contiguous")

    def shift(self, base):
        """Positions relative to ``base`` (so ``base.first`` maps to 1)."""
        return IndexSet(self.first - base.first + 1, self.last - base.first + 1)

    def __repr__(self):
        return f"IndexSet({self.first}..{self.last})"


def _check_range(J, size, what):
    if len(J) and J.last > size:
        raise DimensionError(f"{what} index {J.last} exceeds dimension {size}")


def restrict_cols(B, J):
    """Columns of ``B`` listed in ``J``, order preserved."""
    B = np.asarray(B)
    _check_range(J, B.shape[1], "column")
    return B[:, J.slice].copy()


def restrict_rows(B, J):
    B = np.asarray(B)
    _check_range(J, B.shape[0], "row")
    return B[J.slice].copy()


def restrict_block(B, Jr, Jc):
    """Sub-matrix ``B[Jr x Jc]``."""
    B = np.asarray(B)
    _check_range(Jr, B.shape[0], "row")
    _check_range(Jc, B.shape[1], "column")
    return B[Jr.slice, Jc.slice].copy()


def restrict_vec(v, J):
    v = np.asarray(v)
    _check_range(J, v.shape[0], "vector")
    return v[J.slice].copy()


def extend(w, first, r):
    """Zero-pad ``w`` into a length-``r`` vector starting at 1-based ``first``."""
    w = np.asarray(w, dtype=float)
    if first < 1:
        raise DimensionError(f"extension start must be >= 1, got {first}")
    if first + w.shape[0] - 1 > r:
        raise DimensionError(f"span {first}..{first + w.shape[0] - 1} exceeds length {r}")
    out = np.zeros(r)
    out[first - 1:first - 1 + w.shape[0]] = w
    return out


def symmetrize(A):
    return 0.5 * (A + A.T)


def spd_solve(A, B):
    """Solve ``A X = B`` for symmetric positive definite ``A``.

    Uses a Cholesky factorization of the symmetrized ``A``; no inverse is formed.

    Raises
    ------
    ShapeError
        ``A`` is not square or is asymmetric beyond ``1e-10 * ||A||``.
    NotPositiveDefiniteError
        The factorization meets a non-positive pivot.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"spd_solve needs a square matrix, got {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"right-hand side has {B.shape[0]} rows, expected {A.shape[0]}")
    scale = np.abs(A).max() if A.size else 0.0
    if np.abs(A - A.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise ShapeError("spd_solve needs a symmetric matrix")
    try:
        factor = linalg.cho_factor(symmetrize(A), lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    return linalg.cho_solve(factor, B, check_finite=False)
