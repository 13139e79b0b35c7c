"""Backend selection for the pointwise matrix kernels.

The compiled extension is used when it imported cleanly; otherwise the
numpy fallback takes over transparently.  KRFLOW_KERNELS=python|cython
forces a backend (the benchmark and the parity tests use this).
"""
import os

from . import _kernels_py

_forced = os.environ.get("KRFLOW_KERNELS", "").strip().lower()

_impl = None
BACKEND = "python"
if _forced != "python":
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise ImportError(
                "KRFLOW_KERNELS=cython but the compiled extension is not available"
            )
        _impl = None
if _impl is None:
    _impl = _kernels_py

det_herm = _impl.det_herm
det_sum_ratio = _impl.det_sum_ratio
inv_herm = _impl.inv_herm
trace_pair = _impl.trace_pair
quad_form = _impl.quad_form
third_contract = _impl.third_contract
eig_range_herm = _impl.eig_range_herm
