"""Build script: compiles the hot-loop kernels as a C extension when possible.

The extension is optional.  If Cython or a C compiler is unavailable (or
RMSEQUIV_PURE_PYTHON is set), the package installs without it and the pure
NumPy kernels are selected at import time.
"""
import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Let the install proceed with the pure-Python kernels if compilation fails."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"WARNING: building the C kernel extension failed ({exc}); "
                  "falling back to the pure-Python kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: compiling {ext.name} failed ({exc}); "
                  "falling back to the pure-Python kernels")


ext_modules = []
cmdclass = {}
if not os.environ.get("RMSEQUIV_PURE_PYTHON"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "rmsequiv._kernel_cy",
                    ["src/rmsequiv/_kernel_cy.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level="3",
        )
        cmdclass = {"build_ext": optional_build_ext}
    except ImportError:
        print("WARNING: Cython not available; installing with pure-Python kernels only")

setup(ext_modules=ext_modules, cmdclass=cmdclass)
