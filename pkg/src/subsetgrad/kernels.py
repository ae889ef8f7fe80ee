"""Backend selection for the subset least-squares kernels.

The compiled extension is used when importable; set ``SUBSETGRAD_PURE_PYTHON=1``
to force the fallback (handy for benchmarking and for checking the two agree).
"""
import os

from . import _kernels_py

if os.environ.get("SUBSETGRAD_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

subset_quad_batch = _impl.subset_quad_batch
best_subset_search = _impl.best_subset_search

__all__ = ["BACKEND", "subset_quad_batch", "best_subset_search"]
