from setuptools import setup, find_packages

import os

install_requires = [
    "colorama",
    "networkx>=3.2",
    "numpy>=1.22",
    "scipy>=1.8",
    "tomlkit",
    "tqdm",
    "typeguard",
]

extras_require = {
    "test": [
        "pytest",
        "pytest-html",
        "pytest-socket",
    ],
}

# Get hetcon version from the VERSION file.
version_file = os.path.join(os.path.dirname(__file__), "VERSION")
with open(version_file) as f:
    hetcon_version = f.read().strip()

with open(os.path.join(os.path.dirname(__file__), "README.md")) as f:
    long_description = f.read()

setup(
    name="hetcon",
    version=hetcon_version,
    license="GPLv3",
    description="Consensus certificates for heterogeneous networks of LTI systems",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.9",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    package_data={"hetcon": ["py.typed"]},
    install_requires=install_requires,
    extras_require=extras_require,
    entry_points={
        "console_scripts": [
            "hetcon = hetcon.cli.main:main",
        ],
    },
)
