"""Build script: compiles the optional fast kernels.

The package is fully functional without the extension; a pure-Python
implementation of the same kernels is selected at import time when the
compiled module is unavailable (or when TANGENTSTAT_PURE=1 is set).
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, fall back to pure Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, etc.
            print(f"warning: skipping compiled kernels ({exc}); "
                  "the pure-Python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); "
                  "the pure-Python fallback will be used")


def make_extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    return cythonize(
        [
            Extension(
                "tangentstat._kernels._core",
                ["src/tangentstat/_kernels/_core.pyx"],
                # -ffp-contract=off keeps results bit-identical to the
                # pure-Python backend (no FMA fusion).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )


setup(ext_modules=make_extensions(), cmdclass={"build_ext": OptionalBuildExt})
