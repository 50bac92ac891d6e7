"""Temporal convolution kernels with a compiled backend and numpy fallback.

The compiled extension ``_conv`` is used when it was built; otherwise, or when
the environment variable ``GSTAM_KERNELS=python`` is set, the numpy
implementation in ``_fallback`` is used.  ``BACKEND`` names the active one.
"""

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("GSTAM_KERNELS", "").lower() != "python":
    try:
        from . import _conv as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv1d_forward(x, weight, bias):
    return _impl.conv1d_forward(_c(x), _c(weight), _c(bias))


def conv1d_backward(x, weight, grad_out):
    return _impl.conv1d_backward(_c(x), _c(weight), _c(grad_out))


def backends():
    """Map of backend name -> module for every importable implementation."""
    found = {"python": _fallback}
    try:
        from . import _conv
    except ImportError:
        pass
    else:
        found["cython"] = _conv
    return found
