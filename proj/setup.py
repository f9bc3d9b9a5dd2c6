"""Builds the C++ extension for pip installs.

Compiles the core sources directly with pybind11's setuptools helpers, so a
plain `pip install --no-build-isolation .` (or `-e .`) needs nothing beyond a
C++20 compiler. CMake remains the primary build for the CLI and test suite.
"""

from glob import glob

from pybind11.setup_helpers import Pybind11Extension, ParallelCompile, build_ext
from setuptools import setup

ParallelCompile("NPY_NUM_BUILD_JOBS").install()

ext = Pybind11Extension(
    "polysketch._core",
    sorted(glob("src/*.cpp")) + ["python/bindings.cpp"],
    include_dirs=["include", "vendor"],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
