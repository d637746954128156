"""Build the optional compiled kernels; the package works without them."""
import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        sys.stderr.write(f"warning: compiled kernels not built ({exc}); "
                         "falling back to pure Python\n")


def extensions():
    if os.environ.get("INCSTAB_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "incstab.kernels._ckernels",
        ["src/incstab/kernels/_ckernels.pyx"],
        # bit-for-bit parity with the Python twin: no fast-math, no FMA contraction
        extra_compile_args=["-O2", "-ffp-contract=off", "-fno-builtin", "-fno-fast-math"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
