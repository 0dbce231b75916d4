"""Kernel backend selection.

Set VPREG_BACKEND=numpy to force the pure-numpy path; VPREG_BACKEND=numba
requires numba to import. Unset, the numba path is used when available and
falls back to numpy otherwise. Derivative stencils (deriv_axis) are shared.
"""

import os
import warnings

from . import numpy_kernels

_requested = os.environ.get("VPREG_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "numba"):
    raise ValueError(f"VPREG_BACKEND must be 'numpy' or 'numba', got {_requested!r}")

if _requested == "numpy":
    kernels = numpy_kernels
    BACKEND = "numpy"
else:
    try:
        from . import numba_kernels

        kernels = numba_kernels
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        warnings.warn("numba unavailable; falling back to the numpy kernel backend")
        kernels = numpy_kernels
        BACKEND = "numpy"

deriv_axis = numpy_kernels.deriv_axis
