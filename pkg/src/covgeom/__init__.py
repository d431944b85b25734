"""Covariate information geometry for smooth densities on R^n."""

from covgeom.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
