"""Low-rank matrices in primary/secondary column form.

A rank-``r`` matrix ``X`` (``n1 x n2``) is described by ``r`` primary columns
at indices ``diamond`` and coefficients ``alpha`` expressing each of the
``n2 - r`` secondary columns (indices ``star``) as a linear combination of
the primaries::

    X[:, star[s]] = X[:, diamond] @ alpha[s]

Indices are 0-based throughout. ``vec`` is column-major.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateInputError, ParameterError

RANK_RTOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _index_array(idx):
    a = np.array(idx, dtype=np.intp).reshape(-1)
    a.setflags(write=False)
    return a


def vec(X):
    """Column-major vectorization."""
    return np.asarray(X, dtype=np.float64).reshape(-1, order="F")


def unvec(x, n1, n2):
    return np.asarray(x, dtype=np.float64).reshape((n1, n2), order="F")


def numerical_rank(X, rtol=RANK_RTOL):
    """Count singular values above ``rtol * sigma_max``."""
    s = np.linalg.svd(np.asarray(X, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


@dataclass(frozen=True)
class RankDecomposition:
    """Primary column indices, secondary indices and combination weights."""

    diamond: np.ndarray
    star: np.ndarray
    alpha: np.ndarray
    primary_columns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "diamond", _index_array(self.diamond))
        object.__setattr__(self, "star", _index_array(self.star))
        object.__setattr__(self, "primary_columns", _frozen(self.primary_columns))
        r = self.diamond.size
        alpha = np.asarray(self.alpha, dtype=np.float64).reshape(self.star.size, r)
        object.__setattr__(self, "alpha", _frozen(alpha))
        if self.primary_columns.ndim != 2 or self.primary_columns.shape[1] != r:
            raise ParameterError("primary_columns must be n1 x r")
        both = np.concatenate([self.diamond, self.star])
        if not np.array_equal(np.sort(both), np.arange(both.size)):
            raise ParameterError("diamond and star must partition 0..n2-1")

    @property
    def n1(self):
        return self.primary_columns.shape[0]

    @property
    def n2(self):
        return self.diamond.size + self.star.size

    @property
    def r(self):
        return self.diamond.size

    def reconstruct(self):
        X = np.zeros((self.n1, self.n2))
        X[:, self.diamond] = self.primary_columns
        X[:, self.star] = self.primary_columns @ self.alpha.T
        return X


@dataclass(frozen=True)
class LowRankMatrix:
    """A rank-``r`` matrix, optionally carrying the factors that generated it."""

    entries: np.ndarray
    r: int
    decomposition: RankDecomposition | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))
        if self.entries.ndim != 2:
            raise ParameterError("entries must be a 2-D matrix")
        n1, n2 = self.entries.shape
        if n1 > n2:
            raise ParameterError(f"expected n1 <= n2, got {n1} x {n2}")
        if not 0 <= self.r <= n1:
            raise ParameterError(f"rank {self.r} out of range for {n1} x {n2}")

    @property
    def n1(self):
        return self.entries.shape[0]

    @property
    def n2(self):
        return self.entries.shape[1]

    @property
    def alpha(self):
        return None if self.decomposition is None else self.decomposition.alpha

    @property
    def diamond(self):
        return None if self.decomposition is None else self.decomposition.diamond


@dataclass(frozen=True)
class BlockSparseVector:
    """Vector of ``n2`` blocks of length ``n1``, nonzero only on ``active_blocks``.

    ``values[k]`` holds the contents of block ``active_blocks[k]``.
    """

    n1: int
    n2: int
    active_blocks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "active_blocks", _index_array(self.active_blocks))
        vals = np.asarray(self.values, dtype=np.float64).reshape(self.active_blocks.size, self.n1)
        object.__setattr__(self, "values", _frozen(vals))
        if self.active_blocks.size > self.n2:
            raise ParameterError("more active blocks than blocks")
        if np.unique(self.active_blocks).size != self.active_blocks.size:
            raise ParameterError("duplicate active block")
        if self.active_blocks.size and not (
            0 <= self.active_blocks.min() and self.active_blocks.max() < self.n2
        ):
            raise ParameterError("active block index out of range")

    def to_dense(self):
        f = np.zeros((self.n2, self.n1))
        f[self.active_blocks] = self.values
        return f.reshape(-1)


def gen_low_rank_slrp(n1, n2, r, seed, allow_zero=False):
    """Draw a rank-``r`` matrix with the statistical low rank property.

    The ``r`` primary columns have i.i.d. standard normal entries and sit at
    ``r`` uniformly random column positions. Every secondary column is a
    combination of the primaries with i.i.d. ``N(0, 1/r)`` weights, so all
    columns share the same entry variance. The weights are kept in the
    returned matrix's ``decomposition``.

    ``r = 0`` is rejected unless ``allow_zero`` is set, in which case the
    zero matrix (empty ``diamond``) is returned.
    """
    n1, n2, r = int(n1), int(n2), int(r)
    if n1 < 1 or n2 < 1:
        raise ParameterError("dimensions must be positive")
    if n1 > n2:
        raise ParameterError(f"expected n1 <= n2, got {n1} x {n2}")
    lo = 0 if allow_zero else 1
    if not lo <= r <= min(n1, n2):
        raise ParameterError(f"rank {r} out of range [{lo}, {min(n1, n2)}]")
    rng = np.random.default_rng(seed)
    diamond = np.sort(rng.choice(n2, size=r, replace=False))
    star = np.setdiff1d(np.arange(n2), diamond)
    primary = rng.standard_normal((n1, r))
    if r > 0:
        alpha = rng.normal(0.0, np.sqrt(1.0 / r), size=(n2 - r, r))
    else:
        alpha = np.zeros((n2, 0))
    decomp = RankDecomposition(diamond, star, alpha, primary)
    return LowRankMatrix(decomp.reconstruct(), r, decomp)


def decompose(X, rank=None):
    """Split ``X`` into primary columns and least-squares combination weights.

    Primary columns are the first ``rank`` pivots of a column-pivoted QR
    factorization (LAPACK picks the lowest index on ties), returned in
    ascending order. ``rank`` defaults to the numerical rank of ``X``.
    """
    if isinstance(X, LowRankMatrix):
        rank = X.r if rank is None else rank
        X = X.entries
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ParameterError("X must be a matrix")
    if not np.any(X):
        raise DegenerateInputError("all columns are zero")
    if rank is None:
        rank = numerical_rank(X)
    if rank < 1:
        raise DegenerateInputError("numerical rank below 1")
    if rank > min(X.shape):
        raise ParameterError(f"rank {rank} exceeds min{X.shape}")
    _, piv = scipy.linalg.qr(X, mode="r", pivoting=True)
    diamond = np.sort(piv[:rank])
    star = np.setdiff1d(np.arange(X.shape[1]), diamond)
    primary = X[:, diamond]
    if star.size:
        coef, *_ = scipy.linalg.lstsq(primary, X[:, star])
        alpha = coef.T
    else:
        alpha = np.zeros((0, rank))
    return RankDecomposition(diamond, star, alpha, primary)


def build_block_sparse(decomp):
    """Block-sparse vector with the primary columns at the ``diamond`` blocks."""
    return BlockSparseVector(decomp.n1, decomp.n2, decomp.diamond, decomp.primary_columns.T)


def expand_psi(decomp):
    """Dense ``N x N`` matrix ``Psi`` with ``Psi @ f = vec(X)``, ``N = n1*n2``.

    Row block ``diamond[k]`` holds an identity at column block ``diamond[k]``;
    row block ``star[s]`` holds ``alpha[s, k] * I`` at column block
    ``diamond[k]``. Columns of inactive blocks are zero.
    """
    n1, n2 = decomp.n1, decomp.n2
    coupling = np.zeros((n2, n2))
    coupling[decomp.diamond, decomp.diamond] = 1.0
    if decomp.star.size:
        coupling[np.ix_(decomp.star, decomp.diamond)] = decomp.alpha
    return np.kron(coupling, np.eye(n1))
