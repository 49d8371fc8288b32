"""Space and time decompositions and the block partitions of ``M`` and ``H``.

Two-subdomain layout (1-based, contiguous)::

    I1  = {1, ..., n1}              I2  = {n1 - s + 1, ..., n}
    I12 = {n1 - s + 1, ..., n1}     n2  = n - n1 + s
    I1~ = I1 minus I12              I2~ = I2 minus I12

The coupling blocks ``M12`` and ``M21`` have their overlap columns zeroed,
so that ``M|_{I1 x .} x = M1 x|_{I1} + M12 x|_{I2}`` counts every column once.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, ShapeError
from .matrixcore import IndexSet, restrict_block, restrict_cols


@dataclass(frozen=True)
class SpaceDecomposition:
    n: int
    n1: int
    n2: int
    s: int
    I1: IndexSet
    I2: IndexSet
    I12: IndexSet
    I1_tilde: IndexSet
    I2_tilde: IndexSet

    @property
    def subsets(self):
        return (self.I1, self.I2)


def build_space_decomposition(n, n1, s=0):
    """Two overlapping subdomains of ``{1..n}`` sharing ``s`` points.

    Raises
    ------
    ConfigurationError
        ``s`` odd or negative, or the sets fall outside ``{1..n}``, or a
        subdomain would lie entirely inside the overlap.
    """
    n, n1, s = int(n), int(n1), int(s)
    if s < 0 or s % 2:
        raise ConfigurationError(f"overlap s must be a non-negative even integer, got {s}", key="overlap_s")
    if not 1 <= n1 < n:
        raise ConfigurationError(f"n1 must satisfy 1 <= n1 < n, got n1={n1}, n={n}", key="n1")
    n2 = n - n1 + s
    if s >= n1 or s >= n2:
        raise ConfigurationError(
            f"overlap s={s} must be smaller than both subdomains (n1={n1}, n2={n2})", key="overlap_s")
    I1 = IndexSet(1, n1)
    I2 = IndexSet(n1 - s + 1, n)
    I12 = IndexSet(n1 - s + 1, n1)
    return SpaceDecomposition(n, n1, n2, s, I1, I2, I12, I1.difference(I12), I2.difference(I12))


def symmetric_split(n, s):
    """Decomposition with ``n1 = n/2 + s/2`` (equal halves widened by the overlap)."""
    return build_space_decomposition(n, n // 2 + s // 2, s)


@dataclass(frozen=True)
class MultiDecomposition:
    """``n_sub`` contiguous subdomains; neighbours share ``s`` points."""

    n: int
    s: int
    subsets: tuple

    @property
    def n_sub(self):
        return len(self.subsets)


def build_multi_decomposition(n, n_sub, s=0, sizes=None):
    """Split ``{1..n}`` into ``n_sub`` chained subdomains with overlap ``s``.

    ``sizes`` are the non-overlapped core sizes (summing to ``n``); by default
    they are as equal as possible. Each subdomain except the last is widened
    by ``s`` points to the right.
    """
    n, n_sub, s = int(n), int(n_sub), int(s)
    if n_sub < 2:
        raise ConfigurationError("n_sub must be at least 2", key="n_sub")
    if s < 0 or s % 2:
        raise ConfigurationError(f"overlap s must be a non-negative even integer, got {s}", key="overlap_s")
    if sizes is None:
        base, extra = divmod(n, n_sub)
        sizes = [base + (1 if i < extra else 0) for i in range(n_sub)]
    sizes = [int(v) for v in sizes]
    if len(sizes) != n_sub or sum(sizes) != n or min(sizes) < 1:
        raise ConfigurationError(f"core sizes {sizes} must be {n_sub} positive integers summing to {n}", key="sizes")
    subsets = []
    start = 1
    for i, size in enumerate(sizes):
        last = start + size - 1
        if i < n_sub - 1:
            last += s
        subsets.append(IndexSet(start, last))
        start += size
    for a, b, c in zip(subsets, subsets[1:], subsets[2:]):
        if len(a.intersection(c)):
            raise ConfigurationError("overlap too wide: non-adjacent subdomains intersect", key="overlap_s")
    for a, b in zip(subsets, subsets[1:]):
        if len(b.difference(a)) == 0 or len(a.difference(b)) == 0:
            raise ConfigurationError("a subdomain lies entirely inside an overlap", key="overlap_s")
    return MultiDecomposition(n, s, tuple(subsets))


def as_multi(sd):
    """View a two-subdomain decomposition as a :class:`MultiDecomposition`."""
    if isinstance(sd, MultiDecomposition):
        return sd
    return MultiDecomposition(sd.n, sd.s, (sd.I1, sd.I2))


@dataclass(frozen=True)
class TimeDecomposition:
    """Overlapping time windows over the steps ``0..r``.

    ``offsets[j]`` is the first time index of window ``j`` (0-based ``j``);
    window ``j`` spans time indices ``offsets[j] .. offsets[j] + sizes[j]``
    and hence the filter steps ``offsets[j] .. offsets[j] + sizes[j] - 1``.
    """

    r: int
    sizes: tuple
    overlaps: tuple
    offsets: tuple

    @property
    def L(self):
        return len(self.sizes)

    def window(self, j):
        """Time indices of window ``j`` (inclusive range)."""
        return range(self.offsets[j], self.offsets[j] + self.sizes[j] + 1)

    def window_steps(self, j):
        return range(self.offsets[j], self.offsets[j] + self.sizes[j])


def build_time_decomposition(r, sizes, overlaps=()):
    """Windows with sizes ``s_j`` and overlaps ``s_{j-1,j}``.

    ``overlaps`` has ``L - 1`` entries. Window ``j`` starts where window
    ``j - 1`` ends minus their overlap, ``sbar_j = sbar_{j-1} + s_j - s_{j,j+1}``
    (so ``sbar_1 = s_1 - s_{1,2}``), and the windows must close,
    ``sbar_{L-1} + s_L = r + 1``.
    """
    sizes = tuple(int(v) for v in sizes)
    overlaps = tuple(int(v) for v in overlaps)
    if not sizes or min(sizes) < 1:
        raise ConfigurationError(f"window sizes must be positive, got {sizes}", key="windows")
    if len(overlaps) != len(sizes) - 1:
        raise ConfigurationError("need one overlap per pair of consecutive windows", key="windows")
    if any(o < 0 for o in overlaps):
        raise ConfigurationError("window overlaps must be non-negative", key="windows")
    offsets = [0]
    for j in range(1, len(sizes)):
        offsets.append(offsets[-1] + sizes[j - 1] - overlaps[j - 1])
    for j in range(1, len(sizes)):
        if overlaps[j - 1] > sizes[j - 1]:
            raise ConfigurationError(f"window {j} overlap {overlaps[j - 1]} too large", key="windows")
    if offsets[-1] + sizes[-1] != r + 1:
        raise ConfigurationError(
            f"windows do not close: last offset {offsets[-1]} + size {sizes[-1]} != r + 1 = {r + 1}",
            key="windows")
    return TimeDecomposition(int(r), sizes, overlaps, tuple(offsets))


def two_window_layout(r, s12):
    """Two windows meeting near the middle of ``0..r+1`` with overlap ``s12``.

    The first window has ``s1 = (r + 1) // 2 - 1 + s12 // 2`` steps (25 + s12 // 2
    for ``r + 1 = 52``) and the second is sized by the closure constraint.
    """
    s1 = (r + 1) // 2 - 1 + s12 // 2
    s2 = r + 1 - (s1 - s12)
    return build_time_decomposition(r, (s1, s2), (s12,))


@dataclass
class BlockModel:
    """Partitioned transition matrix of a two-subdomain decomposition."""

    M1: np.ndarray
    M12: np.ndarray
    M21: np.ndarray
    M2: np.ndarray
    sub: dict = field(default_factory=dict)


def partition_model_matrix(M, sd):
    """Blocks ``M1, M12, M21, M2`` (and the 3x3 sub-blocks when ``s > 0``)."""
    M = np.asarray(M, dtype=float)
    if M.shape != (sd.n, sd.n):
        raise ShapeError(f"M must be {sd.n}x{sd.n}, got {M.shape}")
    if sd.s == 0:
        return BlockModel(
            restrict_block(M, sd.I1, sd.I1), restrict_block(M, sd.I1, sd.I2),
            restrict_block(M, sd.I2, sd.I1), restrict_block(M, sd.I2, sd.I2))
    parts = (sd.I1_tilde, sd.I12, sd.I2_tilde)
    sub = {(a + 1, b + 1): restrict_block(M, ra, rb) for a, ra in enumerate(parts) for b, rb in enumerate(parts)}
    z1 = np.zeros((len(sd.I1_tilde), sd.s))
    z12 = np.zeros((sd.s, sd.s))
    M1 = np.block([[sub[1, 1], sub[1, 2]], [sub[2, 1], sub[2, 2]]])
    M12 = np.block([[z1, sub[1, 3]], [z12, sub[2, 3]]])
    M21 = np.block([[sub[2, 1], z12.copy()], [sub[3, 1], np.zeros((len(sd.I2_tilde), sd.s))]])
    M2 = np.block([[sub[2, 2], sub[2, 3]], [sub[3, 2], sub[3, 3]]])
    return BlockModel(M1, M12, M21, M2, sub)


def reassemble_model_matrix(bm, sd):
    """Inverse of :func:`partition_model_matrix`."""
    if sd.s == 0:
        return np.block([[bm.M1, bm.M12], [bm.M21, bm.M2]])
    sub = bm.sub
    return np.block([[sub[a, b] for b in (1, 2, 3)] for a in (1, 2, 3)])


def partition_observation_matrix(H, sd, alpha=0.5):
    """``H1 = [H|I1~, alpha H|I12]`` and ``H2 = [(1 - alpha) H|I12, H|I2~]``."""
    H = np.asarray(H, dtype=float)
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"alpha must lie in [0, 1], got {alpha}", key="alpha_split")
    if H.ndim != 2 or H.shape[1] != sd.n:
        raise ShapeError(f"H must have {sd.n} columns, got shape {H.shape}")
    H1 = restrict_cols(H, sd.I1)
    H2 = restrict_cols(H, sd.I2)
    if sd.s:
        H1[:, sd.I12.shift(sd.I1).slice] *= alpha
        H2[:, sd.I12.shift(sd.I2).slice] *= 1.0 - alpha
    return H1, H2


def owner_columns(md, i, j):
    """1-based positions (relative to ``I_j``) of the columns ``M_{i,j}`` keeps.

    Those are the columns of ``I_j`` outside ``I_i`` that are not closer to
    another subdomain on the same side.
    """
    Ii, Ij = md.subsets[i], md.subsets[j]
    keep = Ij.difference(Ii)
    if j < i - 1 or j > i + 1:
        raise DimensionError("only neighbouring subdomains couple")
    return keep.shift(Ij)


def partition_model_multi(M, md):
    """Diagonal blocks ``M_i`` and neighbour couplings ``M_{i,j}`` (``|i-j| = 1``).

    Raises
    ------
    DimensionError
        ``M`` couples a subdomain to columns outside its two neighbours, i.e.
        it is not block-tridiagonal with respect to ``md``.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (md.n, md.n):
        raise ShapeError(f"M must be {md.n}x{md.n}, got {M.shape}")
    p = md.n_sub
    blocks = {}
    for i, Ii in enumerate(md.subsets):
        covered = np.zeros(md.n, dtype=bool)
        covered[Ii.slice] = True
        blocks[i, i] = restrict_block(M, Ii, Ii)
        for j in (i - 1, i + 1):
            if not 0 <= j < p:
                continue
            Ij = md.subsets[j]
            keep = owner_columns(md, i, j)
            blk = np.zeros((len(Ii), len(Ij)))
            cols = slice(keep.first - 1, keep.last)
            blk[:, cols] = restrict_block(M, Ii, Ij)[:, cols]
            blocks[i, j] = blk
            covered[Ij.slice] = True
        stray = M[Ii.slice][:, ~covered]
        if np.any(stray != 0.0):
            raise DimensionError(f"M is not block-tridiagonal: rows of subdomain {i + 1} reach beyond its neighbours")
    return blocks


def partition_observation_multi(H, md, alpha=0.5):
    """Column split of ``H`` with weight ``alpha`` / ``1 - alpha`` on each overlap."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[1] != md.n:
        raise ShapeError(f"H must have {md.n} columns, got shape {H.shape}")
    out = []
    for i, Ii in enumerate(md.subsets):
        Hi = restrict_cols(H, Ii)
        if i > 0:
            ov = Ii.intersection(md.subsets[i - 1])
            if len(ov):
                Hi[:, ov.shift(Ii).slice] *= 1.0 - alpha
        if i < md.n_sub - 1:
            ov = Ii.intersection(md.subsets[i + 1])
            if len(ov):
                Hi[:, ov.shift(Ii).slice] *= alpha
        out.append(Hi)
    return out
