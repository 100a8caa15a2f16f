"""Backend selection for the Toeplitz block kernels.

The compiled Cython core is used when it was built; otherwise, or when the
environment variable ``PTSENSE_PURE_PYTHON`` is set to a non-empty value, the
numpy implementation in :mod:`ptsense._pykernels` is used. Both expose:

``toeplitz_apply(gens, cols, M)``
    ``sum_i T_i @ cols[i]``; ``gens`` is ``(n2, M + n1 - 1)``, ``cols`` is
    ``(n2, n1)`` (the columns of X as rows).
``toeplitz_adjoint(gens, y, n1)``
    ``(n2, n1)`` array of ``T_i.T @ y``.
``toeplitz_expand(gens, M, n1)``
    dense ``(B, M, n1)`` stack of Toeplitz blocks.
``toeplitz_block_matvecs(gens, vecs, M)``
    ``(M, r, n2)`` array of ``T_i @ vecs[c]``.

All inputs must be C-contiguous float64.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

if _ckernels is not None and not os.environ.get("PTSENSE_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"

_impl = _BACKENDS[BACKEND]

toeplitz_apply = _impl.toeplitz_apply
toeplitz_adjoint = _impl.toeplitz_adjoint
toeplitz_expand = _impl.toeplitz_expand
toeplitz_block_matvecs = _impl.toeplitz_block_matvecs


def available_backends():
    """Map backend name to kernel module for every importable backend."""
    return dict(_BACKENDS)
