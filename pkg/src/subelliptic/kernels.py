"""Backend selection for the batch kernels.

The compiled extension is used when it imports; set ``SUBELL_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py

if os.environ.get("SUBELL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
breakpoints = _impl.breakpoints
trace = _impl.trace
poly_eval = _impl.poly_eval


def backends():
    """Available backend modules keyed by name (for benchmarks and parity tests)."""
    out = {"python": _kernels_py}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
