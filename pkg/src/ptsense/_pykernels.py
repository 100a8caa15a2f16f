"""Pure numpy Toeplitz block kernels (fallback for the compiled core).

Same generator convention as the compiled module: block ``i`` has
``T[k, l] = gens[i, k - l + n1 - 1]``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(gens, M, n1):
    # W[b, k, l] = gens[b, k + n1 - 1 - l]; a strided view, nothing copied
    return sliding_window_view(gens, n1, axis=1)[:, :M, ::-1]


def toeplitz_apply(gens, cols, M):
    n1 = cols.shape[1]
    return np.einsum("ikl,il->k", _windows(gens, M, n1), cols)


def toeplitz_adjoint(gens, y, n1):
    M = y.shape[0]
    return np.einsum("ikl,k->il", _windows(gens, M, n1), y)


def toeplitz_expand(gens, M, n1):
    return np.ascontiguousarray(_windows(gens, M, n1))


def toeplitz_block_matvecs(gens, vecs, M):
    n1 = vecs.shape[1]
    return np.einsum("ikl,cl->kci", _windows(gens, M, n1), vecs)
