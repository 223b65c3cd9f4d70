"""Segment kernels used on every forward pass.

The compiled extension is used when it was built; otherwise (or when
``PAS_PURE_PYTHON=1`` is set) the numpy fallback is selected at import.
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("PAS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _segment as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

segment_sum = _impl.segment_sum
segment_max = _impl.segment_max
segment_softmax = _impl.segment_softmax
topk_select = _impl.topk_select
sort_index = _impl.sort_index

__all__ = [
    "BACKEND",
    "segment_sum",
    "segment_max",
    "segment_softmax",
    "topk_select",
    "sort_index",
]
