from setuptools import Extension, setup

# The compiled kernel core is optional: without a C toolchain the package
# falls back to the numpy implementations selected in poseadapt.kernels.
ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "poseadapt._kernels",
        ["src/poseadapt/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext.optional = True
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
except ImportError:
    pass

setup(ext_modules=ext_modules)
