"""Kernel backend selection.

The compiled module ``qrecover._kernels`` is used when it was built and
``QRECOVER_PURE_PYTHON`` is unset; otherwise the numpy fallback in
``qrecover._kernels_py`` is loaded. Both expose the same functions.
"""
import os

if os.environ.get("QRECOVER_PURE_PYTHON", "") not in ("", "0"):
    from qrecover import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from qrecover import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        from qrecover import _kernels_py as _impl

        BACKEND = "python"

ptrace_offsets = _impl.ptrace_offsets
entropy_bits = _impl.entropy_bits
theorem5_terms = _impl.theorem5_terms

__all__ = ["BACKEND", "ptrace_offsets", "entropy_bits", "theorem5_terms"]
