"""Pick the compiled kernels when available, else the pure-Python ones.

Set ``SIAMSCENE_PURE=1`` to force the fallback (used by the benchmark and by
the backend-parity tests).
"""
import os

from . import _purepy

BACKEND = "python"

if os.environ.get("SIAMSCENE_PURE", "") not in ("", "0"):
    _impl = _purepy
else:
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _purepy

jacobi_eigh = _impl.jacobi_eigh
pairwise_distances = _impl.pairwise_distances
segmentation_scores = _impl.segmentation_scores

__all__ = ["BACKEND", "jacobi_eigh", "pairwise_distances", "segmentation_scores"]
