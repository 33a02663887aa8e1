"""Build hook for the optional compiled solver kernel.

Metadata lives in pyproject.toml.  Without Cython or a C compiler the
package still installs and runs on the pure-Python kernel.
"""
from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("reachavoid.solver._ckernel", ["src/reachavoid/solver/_ckernel.pyx"],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
