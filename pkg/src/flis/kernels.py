"""Backend selection for the hot kernels.

The compiled extension is used when importable; ``FLIS_PURE_PYTHON=1`` forces
the numpy fallback. Both expose ``omp_gram``, ``lasso_cd``, ``nnqp_gram`` and ``edt_sq``.
"""
import os

from . import _fallback

if os.environ.get("FLIS_PURE_PYTHON") == "1":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

omp_gram = _impl.omp_gram
lasso_cd = _impl.lasso_cd
edt_sq = _impl.edt_sq
nnqp_gram = _impl.nnqp_gram
