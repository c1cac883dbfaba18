from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:  # no compiler toolchain: the pure-Python kernel is used
    ext_modules = []
else:
    ext_modules = cythonize(
        Extension(
            "pqflow._spiral_kernel",
            ["src/pqflow/_spiral_kernel.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
        ),
        language_level=3,
    )

setup(ext_modules=ext_modules)
