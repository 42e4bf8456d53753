"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation takes over.  Set ``CTMC_LUMPER_PURE=1`` to force the fallback.
"""
import os

BACKEND = "python"
if os.environ.get("CTMC_LUMPER_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = None
else:
    _impl = None

if _impl is None:
    from . import _kernels_py as _impl

relative_entropy = _impl.relative_entropy
fisher_information = _impl.fisher_information
lsi_descent = _impl.lsi_descent
g_series = _impl.g_series

__all__ = ["BACKEND", "relative_entropy", "fisher_information", "lsi_descent", "g_series"]
