"""Build script: compiles the optional Cython chain kernel.

The package is fully functional without the extension (a pure-Python
fallback with identical semantics is selected at import time), so any
failure to cythonize or compile downgrades to a plain-Python install
instead of aborting.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "rrglab._kernels._chain_cy",
                ["src/rrglab/_kernels/_chain_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"cython kernel skipped ({exc}); installing pure-python backend only")

setup(ext_modules=ext_modules)
