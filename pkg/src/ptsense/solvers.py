"""Low-rank recovery from linear measurements ``y = op.apply(X)``.

Two solvers share the operator interface (``apply``, ``adjoint``,
``left_design``, ``right_design``):

* :func:`svt_solve` -- singular value thresholding, a dual ascent method for
  ``min tau*||X||_* + 0.5*||X||_F^2  s.t.  op(X) = y``.
* :func:`als_solve` -- alternating least squares over ``X = L @ R.T`` from a
  spectral initialization.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import ParameterError

log = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6


class UnderdeterminedWarning(UserWarning):
    """Fewer measurements than the factor degrees of freedom."""


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs. ``None`` picks the per-solver default.

    ``tau``: SVT shrinkage level, default ``5 * ||y|| * sqrt(n1*n2/M)``.
    ``step``: SVT dual step. ``rank``: ALS target rank.
    ``als_reg``: ridge weight in each ALS least-squares subproblem.
    """

    max_iters: int | None = None
    tol: float = 1e-8
    tau: float | None = None
    step: float = 1.2
    rank: int | None = None
    als_reg: float = 1e-10

    def __post_init__(self):
        if self.max_iters is not None and self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ParameterError("tol must be positive")
        if not self.step > 0:
            raise ParameterError("step must be positive")
        if self.als_reg < 0:
            raise ParameterError("als_reg must be non-negative")
        if self.tau is not None and self.tau < 0:
            raise ParameterError("tau must be non-negative")


SVT_MAX_ITERS = 2000
ALS_MAX_ITERS = 500


@dataclass
class SolveResult:
    X_hat: np.ndarray
    iterations: int
    residual_history: np.ndarray
    converged: bool
    status: str = "max_iters"  # converged | max_iters | diverged
    relative_error: float | None = None
    info: dict = field(default_factory=dict)


def relative_error(X_hat, X_true):
    """``||X_hat - X_true||_F / ||X_true||_F`` with ``0/0 = 0``."""
    X_hat = np.asarray(X_hat, dtype=np.float64)
    X_true = np.asarray(X_true, dtype=np.float64)
    if X_hat.shape != X_true.shape:
        raise ParameterError(f"shape mismatch {X_hat.shape} vs {X_true.shape}")
    num = np.linalg.norm(X_hat - X_true)
    den = np.linalg.norm(X_true)
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return float(num / den)


def _norm_ratio(resid, ynorm):
    res = float(np.linalg.norm(resid))
    return res / ynorm if ynorm > 0 else res


def _rel_residual(op, X, y, ynorm):
    return _norm_ratio(op.apply(X) - y, ynorm)


def singular_value_threshold(X, tau):
    """Soft-threshold the singular values of ``X`` by ``tau``."""
    if tau < 0:
        raise ParameterError("tau must be non-negative")
    U, s, Vt = np.linalg.svd(np.asarray(X, dtype=np.float64), full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vt[keep]


def default_tau(op, y):
    return 5.0 * float(np.linalg.norm(y)) * math.sqrt(op.n1 * op.n2 / op.M)


def _finish(X, history, status, X_true):
    err = None if X_true is None else relative_error(X, X_true)
    hist = np.asarray(history, dtype=np.float64)
    return SolveResult(X, len(hist), hist, status == "converged", status, err)


def svt_solve(op, y, cfg=None, X_true=None):
    """Singular value thresholding from ``z = 0``.

    Iterates ``X = shrink(op.adjoint(z), tau)``, ``z += step * (y - op(X))``
    until the relative residual reaches ``cfg.tol``. Returns the iterate with
    the smallest residual; stops early as ``diverged`` when the residual
    exceeds ``1e6`` times the first one.
    """
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.M,):
        raise ParameterError(f"expected {op.M} measurements, got {y.shape}")
    max_iters = cfg.max_iters or SVT_MAX_ITERS
    tau = default_tau(op, y) if cfg.tau is None else cfg.tau
    ynorm = float(np.linalg.norm(y))
    z = np.zeros_like(y)
    best_X, best_res = None, math.inf
    history = []
    status = "max_iters"
    for _ in range(max_iters):
        X = singular_value_threshold(op.adjoint(z), tau)
        resid = y - op.apply(X)
        rel = _norm_ratio(resid, ynorm)
        history.append(rel)
        if rel < best_res:
            best_X, best_res = X, rel
        if rel <= cfg.tol:
            status = "converged"
            break
        if not np.isfinite(rel) or rel > DIVERGENCE_FACTOR * history[0] > 0:
            status = "diverged"
            break
        z = z + cfg.step * resid
    result = _finish(best_X, history, status, X_true)
    result.info["tau"] = tau
    return result


def spectral_init(op, y, rank):
    """Top-``rank`` SVD factors of ``op.adjoint(y)``, balanced by ``sqrt(s)``."""
    if not 1 <= rank <= min(op.n1, op.n2):
        raise ParameterError(f"rank {rank} out of range [1, {min(op.n1, op.n2)}]")
    U, s, Vt = np.linalg.svd(op.adjoint(y), full_matrices=False)
    root = np.sqrt(s[:rank])
    return U[:, :rank] * root, Vt[:rank].T * root


def _ridge_lstsq(D, y, reg):
    """Solve ``min ||D x - y||^2 + reg ||x||^2``; bump ``reg`` x10 on failure."""
    DtD = D.T @ D
    rhs = D.T @ y
    eye = np.eye(DtD.shape[0])
    scale = max(1.0, float(np.trace(DtD)) / DtD.shape[0])
    while True:
        try:
            c = scipy.linalg.cho_factor(DtD + reg * eye, check_finite=False)
            return scipy.linalg.cho_solve(c, rhs, check_finite=False), reg
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            new = max(reg * 10.0, 1e-14 * scale)
            log.warning("ALS normal equations singular; raising ridge %.3g -> %.3g", reg, new)
            reg = new


def _rebalance(L, R):
    QL, TL = np.linalg.qr(L)
    QR, TR = np.linalg.qr(R)
    U, s, Vt = np.linalg.svd(TL @ TR.T)
    root = np.sqrt(s)
    return QL @ (U * root), QR @ (Vt.T * root)


def als_solve(op, y, cfg, X_true=None):
    """Alternating least squares for ``X = L @ R.T`` with ``rank = cfg.rank``.

    Each half step solves a ridge-regularized least squares problem over the
    whole factor. A half step that would raise the residual is rejected, so
    ``residual_history`` never increases.
    """
    if cfg is None or cfg.rank is None:
        raise ParameterError("ALS needs cfg.rank")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.M,):
        raise ParameterError(f"expected {op.M} measurements, got {y.shape}")
    r = int(cfg.rank)
    n1, n2 = op.n1, op.n2
    if op.M < r * (n1 + n2):
        warnings.warn(
            f"M={op.M} < r*(n1+n2)={r * (n1 + n2)}: ALS is likely underdetermined",
            UnderdeterminedWarning,
            stacklevel=2,
        )
    max_iters = cfg.max_iters or ALS_MAX_ITERS
    ynorm = float(np.linalg.norm(y))
    L, R = spectral_init(op, y, r)
    current = _rel_residual(op, L @ R.T, y, ynorm)
    reg = cfg.als_reg
    history = []
    status = "max_iters"
    for _ in range(max_iters):
        if current <= cfg.tol:
            history.append(current)
            status = "converged"
            break
        D = op.left_design(R)
        x, reg = _ridge_lstsq(D, y, reg)
        res = _norm_ratio(D @ x - y, ynorm)
        if res <= current:
            L, current = x.reshape((n1, r), order="F"), res
        D = op.right_design(L)
        x, reg = _ridge_lstsq(D, y, reg)
        res = _norm_ratio(D @ x - y, ynorm)
        if res <= current:
            R, current = x.reshape((n2, r), order="F"), res
        if np.any(L) and np.any(R):
            L, R = _rebalance(L, R)
        history.append(current)
        if current <= cfg.tol:
            status = "converged"
            break
    result = _finish(L @ R.T, history, status, X_true)
    result.info["als_reg"] = reg
    return result


def solve(kind, op, y, cfg=None, X_true=None):
    """Dispatch by solver name (``svt`` or ``als``)."""
    if kind == "svt":
        return svt_solve(op, y, cfg, X_true)
    if kind == "als":
        return als_solve(op, y, cfg, X_true)
    raise ParameterError(f"unknown solver {kind!r}")


def with_rank(cfg, rank):
    return replace(cfg or SolverConfig(), rank=rank)
