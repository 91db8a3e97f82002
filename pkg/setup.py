from Cython.Build import cythonize
from setuptools import Extension, setup

# No -ffast-math and no FMA contraction: the compiled loop must stay
# bit-identical to the pure-Python fallback.
extensions = [
    Extension(
        "sdqcal._tabular_core",
        ["src/sdqcal/_tabular_core.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
