"""Backend selection for the hot KDE kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation is loaded. Setting ``COVGEOM_PURE_PYTHON=1`` forces the
fallback, which is how the test suite cross-checks the two.
"""

import os

import numpy as np

from covgeom import _kernels_py

if os.environ.get("COVGEOM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from covgeom import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"


def kde_logpdf_score(query, samples, bandwidth):
    """Return ``(logpdf, score)`` of the Gaussian KDE at each query row."""
    return _impl.kde_logpdf_score(np.ascontiguousarray(query, dtype=np.float64),
                                  np.ascontiguousarray(samples, dtype=np.float64),
                                  np.ascontiguousarray(bandwidth, dtype=np.float64))


py_kde_logpdf_score = _kernels_py.kde_logpdf_score

__all__ = ["BACKEND", "kde_logpdf_score", "py_kde_logpdf_score"]
