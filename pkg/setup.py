# Builds the optional compiled kernels; the package falls back to numpy
# when the extension is missing.
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("covgeom._ckernels", ["src/covgeom/_ckernels.pyx"],
                   include_dirs=[np.get_include()],
                   define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                   extra_compile_args=["-O3", "-ffast-math"],
                   libraries=["m", "mvec"])],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
