"""
Setup script for the splat regression package.

Installation:
    pip install -e .

Console entry point:
    splatreg <subcommand> --config configs/fig1.cfg --out runs/fig1
"""

from setuptools import find_packages, setup

setup(
    name="splatreg",
    version="0.1.0",
    description="Splat regression: Gaussian mixture models trained by Wasserstein-Fisher-Rao gradient descent",
    packages=find_packages(exclude=["tests", "tests.*", "scripts"]),
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "pandas>=2.0",
        "tqdm>=4.65",
    ],
    extras_require={
        "test": ["pytest>=7.3", "pytest-cov>=4.1"],
    },
    entry_points={
        "console_scripts": [
            "splatreg=splatreg.cli:main",
        ],
    },
)
