"""Build the optional compiled estimator kernel.

The package works without it (a pure-Python twin is selected at import time),
so any compiler failure downgrades to a source-only install instead of
aborting.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/relaysim/_estimator_cy.pyx"],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
