"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the NumPy fallback.
Set ``INFOGAP_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("INFOGAP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py

chebyshev_assign = _impl.chebyshev_assign
binary_state_probs = _impl.binary_state_probs
rotate_bilinear = _impl.rotate_bilinear

__all__ = ["BACKEND", "chebyshev_assign", "binary_state_probs", "rotate_bilinear"]
