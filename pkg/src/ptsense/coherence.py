"""Coherence analysis of the effective sensing matrix ``Theta = A @ Psi``.

For a decomposition with primary indices ``diamond`` and weights ``alpha``,
``y = A vec(X) = Theta f`` where ``f`` holds the primary columns and

    Theta[i] = A[i] + sum_s alpha[s, k] A[star[s]]    if i == diamond[k]
    Theta[i] = 0                                       otherwise.

When every ``A[i]`` is Toeplitz, so is every nonzero ``Theta[i]``: it is the
Toeplitz block of the combined generator.
"""
import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, ParameterError
from .matrix_model import gen_low_rank_slrp
from .operators import (
    DEFAULT_C0,
    PiecewiseToeplitzOperator,
    gen_piecewise_toeplitz,
    materialize,
    truncated_entry_variance,
)
from . import kernels
from .seeding import derive_seed

RIP_ADVISORY_EPS = math.sqrt(2.0) - 1.0
UNIQUENESS_RTOL = 1e-8
DEFAULT_ENUM_BUDGET = 10_000


@dataclass(frozen=True)
class ThetaMatrix:
    M: int
    n1: int
    n2: int
    diamond: np.ndarray
    column_blocks: np.ndarray
    generators: np.ndarray | None = None

    def primary_blocks(self):
        return self.column_blocks[self.diamond]

    def primary_submatrix(self):
        """``Theta[diamond]``: the ``M x (r*n1)`` matrix of nonzero blocks."""
        return self.primary_blocks().transpose(1, 0, 2).reshape(self.M, -1)

    def dense(self):
        return self.column_blocks.transpose(1, 0, 2).reshape(self.M, -1)

    def matvec(self, f):
        return self.dense() @ np.asarray(f, dtype=np.float64)


def build_theta(op, decomp):
    """Assemble ``Theta`` from an operator and a rank decomposition."""
    if (op.n1, op.n2) != (decomp.n1, decomp.n2):
        raise ParameterError(
            f"operator is {op.n1} x {op.n2} but decomposition is {decomp.n1} x {decomp.n2}"
        )
    diamond, star, alpha = decomp.diamond, decomp.star, decomp.alpha
    if isinstance(op, PiecewiseToeplitzOperator):
        g = op.generators
        gens = np.zeros_like(g)
        gens[diamond] = g[diamond] + alpha.T @ g[star]
        blocks = kernels.toeplitz_expand(np.ascontiguousarray(gens), op.M, op.n1)
    else:
        A = op.column_blocks()
        blocks = np.zeros_like(A)
        blocks[diamond] = A[diamond] + np.einsum("sk,sml->kml", alpha, A[star])
        gens = None
    for a in (blocks, gens):
        if a is not None:
            a.setflags(write=False)
    return ThetaMatrix(op.M, op.n1, op.n2, decomp.diamond, blocks, gens)


def is_toeplitz(block):
    """Exact constant-diagonal test."""
    block = np.asarray(block)
    return bool(np.array_equal(block[1:, 1:], block[:-1, :-1]))


@dataclass(frozen=True)
class GramReport:
    """Coherence summary of the column-normalized Gram matrix of ``Theta[diamond]``.

    ``eps1`` measures the spread of the raw squared column norms around their
    mean (the normalized diagonal is exactly 1); ``eps2`` is the largest
    off-diagonal absolute row sum. Every eigenvalue of the normalized Gram
    matrix lies in ``gershgorin_interval``.
    """

    eps1: float
    eps2: float
    eps: float
    gershgorin_interval: tuple
    eig_min: float
    eig_max: float
    scale: float
    rip_advisory: bool

    def contains_spectrum(self):
        lo, hi = self.gershgorin_interval
        return lo <= self.eig_min and self.eig_max <= hi

    def summary(self):
        lo, hi = self.gershgorin_interval
        return (
            f"eps1={self.eps1:.6g} (empirical-scale surrogate) eps2={self.eps2:.6g} "
            f"eps={self.eps:.6g}\n"
            f"gershgorin=[{lo:.6g}, {hi:.6g}] eigenvalues=[{self.eig_min:.6g}, {self.eig_max:.6g}]\n"
            f"eps < sqrt(2)-1 (advisory): {self.rip_advisory}"
        )


def gram_report(theta):
    """Gram/Gershgorin report for a :class:`ThetaMatrix` or a raw column matrix."""
    if isinstance(theta, ThetaMatrix):
        if theta.diamond.size == 0:
            raise DegenerateInputError("Theta has no nonzero block")
        C = theta.primary_submatrix()
    else:
        C = np.asarray(theta, dtype=np.float64)
    sq = np.einsum("ij,ij->j", C, C)
    if np.any(sq == 0.0):
        raise DegenerateInputError("zero column in Theta[diamond]")
    scale = float(sq.mean())
    eps1 = float(np.max(np.abs(sq / scale - 1.0)))
    Cn = C / np.sqrt(sq)
    G = Cn.T @ Cn
    np.fill_diagonal(G, 1.0)
    off = np.abs(G)
    np.fill_diagonal(off, 0.0)
    eps2 = float(off.sum(axis=1).max())
    eps = eps1 + eps2
    eigs = np.linalg.eigvalsh(G)
    return GramReport(
        eps1=eps1,
        eps2=eps2,
        eps=eps,
        gershgorin_interval=(1.0 - eps, 1.0 + eps),
        eig_min=float(eigs[0]),
        eig_max=float(eigs[-1]),
        scale=scale,
        rip_advisory=eps < RIP_ADVISORY_EPS,
    )


@dataclass(frozen=True)
class UniquenessReport:
    mode: str
    min_sigma: float
    max_sigma: float
    witnesses_checked: int
    certified: bool
    worst_support: tuple | None = None

    def summary(self):
        return (
            f"mode={self.mode} witnesses={self.witnesses_checked} "
            f"min_sigma={self.min_sigma:.6g} max_sigma={self.max_sigma:.6g} "
            f"certified={self.certified}"
            + (f" worst_support={list(self.worst_support)}" if self.worst_support else "")
        )


def uniqueness_probe(op, n1, n2, r, mode="exact_enumeration", budget=DEFAULT_ENUM_BUDGET, seed=None):
    """Probe injectivity of ``op`` on block-``2r``-sparse / rank-``2r`` inputs.

    ``exact_enumeration`` checks the smallest singular value of the dense
    operator restricted to every set of ``2r`` column blocks (a sufficient
    condition). ``sampled_probe`` evaluates ``||op(X')||`` for ``budget``
    random unit-norm differences of two rank-``r`` matrices.
    """
    if (op.n1, op.n2) != (n1, n2):
        raise ParameterError(f"operator is {op.n1} x {op.n2}, expected {n1} x {n2}")
    if r < 1:
        raise ParameterError("r must be positive")
    if mode == "exact_enumeration":
        return _exact_probe(op, n1, n2, r, budget)
    if mode == "sampled_probe":
        return _sampled_probe(op, n1, n2, r, budget, seed)
    raise ParameterError(f"unknown probe mode {mode!r}")


def _exact_probe(op, n1, n2, r, budget):
    s = min(2 * r, n2)
    n_supports = math.comb(n2, s)
    if n_supports > budget:
        raise ParameterError(
            f"exact enumeration needs {n_supports} supports, budget is {budget}"
        )
    if op.M < s * n1:
        return UniquenessReport("exact_enumeration", 0.0, 0.0, 0, False)
    blocks = materialize(op).rows.reshape(op.M, n2, n1)
    lo, hi, worst = math.inf, 0.0, None
    for support in itertools.combinations(range(n2), s):
        sv = np.linalg.svd(blocks[:, support, :].reshape(op.M, -1), compute_uv=False)
        hi = max(hi, float(sv[0]))
        if sv[-1] < lo:
            lo, worst = float(sv[-1]), support
    certified = lo > UNIQUENESS_RTOL * hi
    return UniquenessReport("exact_enumeration", lo, hi, n_supports, certified, worst)


def _sampled_probe(op, n1, n2, r, budget, seed):
    rng = np.random.default_rng(seed)
    lo, hi = math.inf, 0.0
    for _ in range(budget):
        X1 = rng.standard_normal((n1, r)) @ rng.standard_normal((r, n2))
        X2 = rng.standard_normal((n1, r)) @ rng.standard_normal((r, n2))
        D = X1 - X2
        val = float(np.linalg.norm(op.apply(D / np.linalg.norm(D))))
        lo, hi = min(lo, val), max(hi, val)
    certified = budget > 0 and lo > UNIQUENESS_RTOL * hi
    return UniquenessReport("sampled_probe", lo, hi, budget, certified)


def measurement_bound(n1, n2, r, constant):
    """Smallest integer ``M >= constant * r^2 (n1 + n2) ln(n1 n2)``."""
    if not constant > 0:
        raise ParameterError("constant must be positive")
    return int(math.ceil(constant * r * r * (n1 + n2) * math.log(n1 * n2)))


# --- concentration of Gram entries --------------------------------------


def divide_and_conquer_split(M, d):
    """Split row indices ``0..M-1`` into two groups of sizes ``floor/ceil(M/2)``.

    For two Toeplitz columns ``d`` apart, the product at row ``k`` shares a
    generator entry only with the products at rows ``k +- d``. Rows are
    chained by residue mod ``d`` and each chain is 2-coloured, flipping the
    starting colour of odd chains so the group sizes differ by at most one.
    Within a group no two rows are ``d`` apart.
    """
    if M < 1 or d < 1:
        raise ParameterError("M and d must be positive")
    groups = ([], [])
    lead = 0
    for start in range(min(d, M)):
        chain = range(start, M, d)
        for pos, k in enumerate(chain):
            groups[(pos + lead) % 2].append(k)
        if len(chain) % 2:
            lead ^= 1
    return tuple(np.array(sorted(g), dtype=np.intp) for g in groups)


def split_has_no_mutual_terms(group, d):
    """True when no two rows in ``group`` are exactly ``d`` apart."""
    rows = set(int(k) for k in group)
    return all(k + d not in rows for k in rows)


CASES = (1, 2, 3, 4)


@dataclass(frozen=True)
class TailRecord:
    case: int
    offset: int  # 0 pools every offset; case 3 also reports each offset
    M: int
    threshold: float
    exceed: int
    trials: int

    @property
    def freq(self):
        return self.exceed / self.trials

    @property
    def stderr(self):
        p = self.freq
        return math.sqrt(p * (1.0 - p) / self.trials)


@dataclass(frozen=True)
class ConcentrationReport:
    """Tail frequencies of the four Gram-entry cases over independent draws.

    For every trial the event recorded is "the largest deviation over all
    column pairs of the case reaches the threshold". ``gamma_estimates[t, i]``
    is ``sqrt(1 + sum_s alpha[s, i]**2)`` for trial ``t`` and
    ``kappa_estimates[t, i, j] = sum_s alpha[s, i] alpha[s, j]``; the matrix
    draw depends on the trial only, so these are shared across ``M``.
    """

    n1: int
    n2: int
    r: int
    c0: float
    seed: int
    M_grid: tuple
    thresholds: tuple
    sigma2: dict
    gamma_estimates: np.ndarray
    kappa_estimates: np.ndarray
    records: list = field(default_factory=list)

    def tail(self, case, M, offset=0):
        for rec in self.records:
            if rec.case == case and rec.M == M and rec.offset == offset:
                return rec
        raise KeyError((case, M, offset))

    def monotone_violations(self, n_se=3.0):
        """(case, offset, M_lo, M_hi) where the frequency rises by > ``n_se`` SE."""
        out = []
        keys = sorted({(rec.case, rec.offset) for rec in self.records})
        grid = sorted(self.M_grid)
        for case, off in keys:
            for m_lo, m_hi in zip(grid, grid[1:]):
                a, b = self.tail(case, m_lo, off), self.tail(case, m_hi, off)
                se = math.sqrt(a.stderr**2 + b.stderr**2)
                if b.freq > a.freq + n_se * se:
                    out.append((case, off, m_lo, m_hi))
        return out

    def rows(self):
        for rec in self.records:
            yield {
                "case": rec.case,
                "offset": rec.offset,
                "M": rec.M,
                "threshold": repr(rec.threshold),
                "exceed": rec.exceed,
                "trials": rec.trials,
                "freq": repr(rec.freq),
            }

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, ["case", "offset", "M", "threshold", "exceed", "trials", "freq"])
            w.writeheader()
            w.writerows(self.rows())

    def summary(self):
        lines = [
            f"concentration study n1={self.n1} n2={self.n2} r={self.r} c0={self.c0} "
            f"trials={self.records[0].trials if self.records else 0}"
        ]
        for rec in self.records:
            if rec.offset == 0:
                lines.append(
                    f"  case {rec.case} M={rec.M:>6} t={rec.threshold:<8.4g} "
                    f"freq={rec.freq:.4f} (+-{rec.stderr:.4f})"
                )
        return "\n".join(lines)


def _case_deviations(P, r, n1, gamma2, kappa, s2M):
    """Largest deviation per case for one draw; ``P`` is ``Theta[diamond]``."""
    C = (P.T @ P).reshape(r, n1, r, n1)
    dev = {}
    diag = np.einsum("iqiq->iq", C)
    dev[1] = float(np.max(np.abs(diag - gamma2[:, None] * s2M)))
    if r > 1:
        iu, ju = np.triu_indices(r, 1)
        same_q = np.einsum("iqjq->ijq", C)[iu, ju]
        dev[2] = float(np.max(np.abs(same_q - kappa[iu, ju][:, None] * s2M)))
        cross = C[iu, :, ju, :]
        mask = ~np.eye(n1, dtype=bool)
        dev[4] = float(np.max(np.abs(cross[:, mask]))) if n1 > 1 else None
    else:
        dev[2] = dev[4] = None
    per_offset = {}
    for d in range(1, n1):
        q = np.arange(n1 - d)
        vals = C[np.arange(r)[:, None], q[None, :], np.arange(r)[:, None], q[None, :] + d]
        per_offset[d] = float(np.max(np.abs(vals)))
    dev[3] = max(per_offset.values()) if per_offset else None
    return dev, per_offset


def concentration_study(M_grid, n1, n2, r, trials, thresholds, seed=0, c0=DEFAULT_C0):
    """Empirical tail frequencies for the four Gram-entry cases.

    ``thresholds = (t0, t1, t2, t3)`` apply to cases 1-4:

    1. ``| ||theta_{i,q}||^2 - gamma_i^2 sigma^2 M |``
    2. ``| theta_{i,q} . theta_{j,q} - kappa_ij sigma^2 M |`` for ``i != j``
    3. ``| theta_{i,q} . theta_{i,q+d} |`` (also reported per offset ``d``)
    4. ``| theta_{i,q1} . theta_{j,q2} |`` for ``i != j``, ``q1 != q2``

    ``sigma^2`` is the actual entry variance of the truncated generator law.
    Cases needing two primary blocks are omitted when ``r == 1``; case 3 and
    4 need ``n1 >= 2``.
    """
    M_grid = tuple(int(m) for m in M_grid)
    if not M_grid:
        raise ParameterError("empty M grid")
    if min(M_grid) < 2:
        raise ParameterError("every M must be at least 2")
    if trials < 1:
        raise ParameterError("trials must be positive")
    thresholds = tuple(float(t) for t in thresholds)
    if len(thresholds) != 4:
        raise ParameterError("need four thresholds t0..t3")

    gammas = np.empty((trials, r))
    kappas = np.empty((trials, r, r))
    decomps = []
    for t in range(trials):
        X = gen_low_rank_slrp(n1, n2, r, derive_seed(seed, t, "matrix"))
        alpha = X.decomposition.alpha
        gammas[t] = np.sqrt(1.0 + np.einsum("si,si->i", alpha, alpha))
        kappas[t] = alpha.T @ alpha
        decomps.append(X.decomposition)

    sigma2 = {M: float(truncated_entry_variance(M, c0)) for M in M_grid}
    counts = {}
    for M in M_grid:
        s2M = sigma2[M] * M
        for t in range(trials):
            op = gen_piecewise_toeplitz(M, n1, n2, c0=c0, seed=derive_seed(seed, t, M, "operator"))
            P = build_theta(op, decomps[t]).primary_submatrix()
            dev, per_offset = _case_deviations(P, r, n1, gammas[t] ** 2, kappas[t], s2M)
            for case in CASES:
                if dev[case] is not None:
                    key = (case, 0, M)
                    counts[key] = counts.get(key, 0) + (dev[case] >= thresholds[case - 1])
            for d, v in per_offset.items():
                key = (3, d, M)
                counts[key] = counts.get(key, 0) + (v >= thresholds[2])

    records = [
        TailRecord(case, off, M, thresholds[case - 1], int(n), trials)
        for (case, off, M), n in sorted(counts.items())
    ]
    return ConcentrationReport(
        n1, n2, r, float(c0), seed, M_grid, thresholds, sigma2, gammas, kappas, records
    )
