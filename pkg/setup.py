import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        f"holdsim.{name}",
        [f"src/holdsim/{name}.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    for name in ("_episode_cy", "_enet_cy")
]

setup(ext_modules=cythonize(extensions, language_level="3"))
