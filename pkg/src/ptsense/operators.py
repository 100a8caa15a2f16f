"""Sensing operators mapping ``n1 x n2`` matrices to ``M`` measurements.

``y[j] = <A_j, X> = trace(A_j.T @ X)``. Two representations are provided:

* :class:`PiecewiseToeplitzOperator` stores, for every column index ``i``, the
  ``M x n1`` matrix ``A[i]`` whose row ``j`` is column ``i`` of ``A_j``. Each
  ``A[i]`` is Toeplitz and is kept as a generator of length ``M + n1 - 1``
  with ``A[i][k, l] = generator[k - l + n1 - 1]`` (so ``generator[n1 - 1]`` is
  the top-left entry and increasing indices walk down the first column).
* :class:`DenseOperator` stores the ``M x (n1*n2)`` matrix whose row ``j`` is
  ``vec(A_j)`` (column-major).
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import kernels
from .errors import ParameterError
from .matrix_model import unvec, vec

DEFAULT_C0 = 4.0
DENSE_KINDS = ("gaussian", "bernoulli", "three_valued")
ALL_KINDS = DENSE_KINDS + ("piecewise_toeplitz",)


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def truncated_entry_variance(M, c0=DEFAULT_C0):
    """Exact variance of ``N(0, 1/M)`` conditioned on ``|e| <= sqrt(c0/M)``."""
    a = np.sqrt(c0)
    mass = 2.0 * norm.cdf(a) - 1.0
    return (1.0 - 2.0 * a * norm.pdf(a) / mass) / M


@dataclass(frozen=True)
class ToeplitzBlock:
    """One ``M x n1`` Toeplitz block held by its generator."""

    M: int
    n1: int
    generator: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "generator", _frozen(self.generator))
        if self.generator.shape != (self.M + self.n1 - 1,):
            raise ParameterError(
                f"generator length {self.generator.shape} != M + n1 - 1 = {self.M + self.n1 - 1}"
            )

    def dense(self):
        return kernels.toeplitz_expand(self.generator[None, :], self.M, self.n1)[0]


def _check_matrix(op, X):
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (op.n1, op.n2):
        raise ParameterError(f"expected a {op.n1} x {op.n2} matrix, got shape {X.shape}")
    return X


def _check_measurements(op, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.M,):
        raise ParameterError(f"expected {op.M} measurements, got shape {y.shape}")
    return y


@dataclass(frozen=True)
class PiecewiseToeplitzOperator:
    M: int
    n1: int
    n2: int
    generators: np.ndarray
    c0: float = DEFAULT_C0
    seed: int | None = None
    kind: str = field(default="piecewise_toeplitz", init=False)

    def __post_init__(self):
        object.__setattr__(self, "generators", _frozen(self.generators))
        if min(self.M, self.n1, self.n2) < 1:
            raise ParameterError("M, n1, n2 must be positive")
        if self.generators.shape != (self.n2, self.M + self.n1 - 1):
            raise ParameterError(
                f"generators must have shape {(self.n2, self.M + self.n1 - 1)}, "
                f"got {self.generators.shape}"
            )

    @property
    def blocks(self):
        return [ToeplitzBlock(self.M, self.n1, g) for g in self.generators]

    @property
    def bound(self):
        """Entry magnitude bound ``sqrt(c0 / M)``."""
        return float(np.sqrt(self.c0 / self.M))

    def column_blocks(self):
        """Dense ``(n2, M, n1)`` stack of the blocks ``A[i]``."""
        return kernels.toeplitz_expand(self.generators, self.M, self.n1)

    def apply(self, X):
        X = _check_matrix(self, X)
        return kernels.toeplitz_apply(self.generators, np.ascontiguousarray(X.T), self.M)

    def adjoint(self, y):
        y = np.ascontiguousarray(_check_measurements(self, y))
        return kernels.toeplitz_adjoint(self.generators, y, self.n1).T.copy()

    def left_design(self, R):
        """Matrix ``D`` with ``D @ vec(L) == apply(L @ R.T)``; shape ``M x (n1*r)``."""
        R = np.asarray(R, dtype=np.float64)
        # sum_i R[i, c] A[i] is Toeplitz with the combined generator
        combined = np.ascontiguousarray(R.T @ self.generators)
        blocks = kernels.toeplitz_expand(combined, self.M, self.n1)
        return blocks.transpose(1, 0, 2).reshape(self.M, -1)

    def right_design(self, L):
        """Matrix ``D`` with ``D @ vec(R) == apply(L @ R.T)``; shape ``M x (n2*r)``."""
        L = np.asarray(L, dtype=np.float64)
        out = kernels.toeplitz_block_matvecs(self.generators, np.ascontiguousarray(L.T), self.M)
        return out.reshape(self.M, -1)

    def storage_cost(self):
        return self.n2 * (self.M + self.n1 - 1)


@dataclass(frozen=True)
class DenseOperator:
    M: int
    n1: int
    n2: int
    rows: np.ndarray
    kind: str = "custom"
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "rows", _frozen(self.rows))
        if self.rows.shape != (self.M, self.n1 * self.n2):
            raise ParameterError(
                f"rows must have shape {(self.M, self.n1 * self.n2)}, got {self.rows.shape}"
            )

    def sensing_matrix(self, j):
        """``A_j`` as an ``n1 x n2`` matrix."""
        return unvec(self.rows[j], self.n1, self.n2)

    def column_blocks(self):
        return self.rows.reshape(self.M, self.n2, self.n1).transpose(1, 0, 2).copy()

    def apply(self, X):
        X = _check_matrix(self, X)
        return self.rows @ vec(X)

    def adjoint(self, y):
        y = _check_measurements(self, y)
        return unvec(self.rows.T @ y, self.n1, self.n2)

    def left_design(self, R):
        R = np.asarray(R, dtype=np.float64)
        B = self.rows.reshape(self.M, self.n2, self.n1)
        # (M, n1, r) -> (M, r, n1): column index k*n1 + a
        return np.swapaxes(np.swapaxes(B, 1, 2) @ R, 1, 2).reshape(self.M, -1)

    def right_design(self, L):
        L = np.asarray(L, dtype=np.float64)
        B = self.rows.reshape(self.M, self.n2, self.n1)
        return np.swapaxes(B @ L, 1, 2).reshape(self.M, -1)

    def storage_cost(self):
        return self.M * self.n1 * self.n2


def gen_piecewise_toeplitz(M, n1, n2, c0=DEFAULT_C0, seed=None):
    """Random piecewise Toeplitz operator with bounded i.i.d. entries.

    Generator entries are ``N(0, 1/M)`` draws, rejected and redrawn until
    ``|e| <= sqrt(c0/M)``. No rescaling follows, so the entry variance is
    :func:`truncated_entry_variance` rather than exactly ``1/M``.
    """
    M, n1, n2 = int(M), int(n1), int(n2)
    if min(M, n1, n2) < 1:
        raise ParameterError("M, n1, n2 must be positive")
    if not c0 > 1:
        raise ParameterError(f"c0 must exceed 1, got {c0}")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(M)
    bound = np.sqrt(c0 / M)
    gens = rng.normal(0.0, scale, size=(n2, M + n1 - 1))
    bad = np.abs(gens) > bound
    while bad.any():
        gens[bad] = rng.normal(0.0, scale, size=int(bad.sum()))
        bad = np.abs(gens) > bound
    return PiecewiseToeplitzOperator(M, n1, n2, gens, c0=float(c0), seed=seed)


def gen_dense(M, n1, n2, kind, seed=None):
    """Dense i.i.d. baseline operator with entry variance ``1/M``.

    ``gaussian``: ``N(0, 1/M)``; ``bernoulli``: ``+-1/sqrt(M)`` equiprobable;
    ``three_valued``: ``+-sqrt(3/M)`` w.p. 1/6 each, 0 w.p. 2/3.
    """
    M, n1, n2 = int(M), int(n1), int(n2)
    if min(M, n1, n2) < 1:
        raise ParameterError("M, n1, n2 must be positive")
    rng = np.random.default_rng(seed)
    shape = (M, n1 * n2)
    if kind == "gaussian":
        rows = rng.normal(0.0, 1.0 / np.sqrt(M), size=shape)
    elif kind == "bernoulli":
        rows = rng.choice(np.array([-1.0, 1.0]), size=shape) / np.sqrt(M)
    elif kind == "three_valued":
        vals = np.array([-1.0, 0.0, 1.0]) * np.sqrt(3.0 / M)
        rows = rng.choice(vals, size=shape, p=[1 / 6, 2 / 3, 1 / 6])
    else:
        raise ParameterError(f"unknown dense operator kind {kind!r}")
    return DenseOperator(M, n1, n2, rows, kind=kind, seed=seed)


def gen_operator(kind, M, n1, n2, c0=DEFAULT_C0, seed=None):
    """Dispatch to :func:`gen_piecewise_toeplitz` or :func:`gen_dense`."""
    if kind == "piecewise_toeplitz":
        return gen_piecewise_toeplitz(M, n1, n2, c0=c0, seed=seed)
    return gen_dense(M, n1, n2, kind, seed=seed)


def apply(op, X):
    return op.apply(X)


def adjoint(op, y):
    return op.adjoint(y)


def materialize(op):
    """Dense equivalent of a piecewise Toeplitz operator.

    Column block ``i`` (columns ``i*n1 .. (i+1)*n1 - 1``) of the result is the
    expanded block ``A[i]``.
    """
    if isinstance(op, DenseOperator):
        return op
    blocks = op.column_blocks()
    rows = blocks.transpose(1, 0, 2).reshape(op.M, op.n1 * op.n2)
    return DenseOperator(op.M, op.n1, op.n2, rows, kind="materialized_toeplitz", seed=op.seed)


def storage_cost(op):
    """Number of stored reals: ``n2*(M+n1-1)`` (Toeplitz) or ``M*n1*n2`` (dense)."""
    return op.storage_cost()


# --- serialization -------------------------------------------------------

_MAGIC = "# ptsense-operator v1"


def _fmt(v):
    return repr(float(v))


def dump_operator(op, fh):
    """Write ``op`` as a text header plus CSV rows (exact float round trip)."""
    c0 = getattr(op, "c0", None)
    seed = "none" if op.seed is None else str(int(op.seed))
    fh.write(_MAGIC + "\n")
    fh.write(
        f"# M={op.M},n1={op.n1},n2={op.n2},kind={op.kind},"
        f"c0={'none' if c0 is None else _fmt(c0)},seed={seed}\n"
    )
    data = op.generators if isinstance(op, PiecewiseToeplitzOperator) else op.rows
    for row in data:
        fh.write(",".join(_fmt(v) for v in row) + "\n")


def load_operator(fh):
    lines = fh.read().splitlines()
    if not lines or lines[0].strip() != _MAGIC:
        raise ParameterError("not a ptsense operator file")
    header = dict(kv.split("=", 1) for kv in lines[1].lstrip("# ").split(","))
    M, n1, n2 = int(header["M"]), int(header["n1"]), int(header["n2"])
    seed = None if header["seed"] == "none" else int(header["seed"])
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:] if ln])
    kind = header["kind"]
    if kind == "piecewise_toeplitz":
        return PiecewiseToeplitzOperator(M, n1, n2, data.reshape(n2, M + n1 - 1),
                                         c0=float(header["c0"]), seed=seed)
    return DenseOperator(M, n1, n2, data.reshape(M, n1 * n2), kind=kind, seed=seed)


def save_operator(op, path):
    with open(path, "w", encoding="utf-8") as fh:
        dump_operator(op, fh)


def read_operator(path):
    with open(path, encoding="utf-8") as fh:
        return load_operator(fh)
