"""Backend dispatch for the numeric kernels.

The numba backend is used when importable. Set POLYTREE_BACKEND=numpy to
force the pure-numpy path, or POLYTREE_BACKEND=numba to require the
jitted path (raising if numba is unavailable).
"""

import os

import numpy as np

_requested = os.environ.get("POLYTREE_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "numba"):
    raise ValueError(
        f"POLYTREE_BACKEND must be 'numpy' or 'numba', got {_requested!r}"
    )

if _requested == "numpy":
    from . import _numpy as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import _numpy as _impl

        BACKEND = "numpy"


def softplus(z):
    return _impl.softplus(np.asarray(z, dtype=np.float64))


def sigmoid(z):
    return _impl.sigmoid(np.asarray(z, dtype=np.float64))


def committee_forward(zmat, r):
    return _impl.committee_forward(
        np.ascontiguousarray(zmat, dtype=np.float64),
        np.ascontiguousarray(r, dtype=np.float64),
    )


def committee_backward(zmat, sp, r, dg):
    return _impl.committee_backward(
        np.ascontiguousarray(zmat, dtype=np.float64),
        np.ascontiguousarray(sp, dtype=np.float64),
        np.ascontiguousarray(r, dtype=np.float64),
        np.ascontiguousarray(dg, dtype=np.float64),
    )
