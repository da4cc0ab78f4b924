"""Backend selection for the sampler kernels.

The compiled extension is used when it imports; otherwise the pure-Python
versions are used. Set ``GRAPHSMOOTH_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("GRAPHSMOOTH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_ext as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

conjugate_draw = _impl.conjugate_draw
hmc_transition = _impl.hmc_transition
log_scale_target = _impl.log_scale_target
adaptive_walk = _impl.adaptive_walk

__all__ = ["BACKEND", "conjugate_draw", "hmc_transition", "log_scale_target", "adaptive_walk"]
