from setuptools import setup, find_packages

setup(
    name="mgir",
    version="0.0.1",
    description="Mixed-granularity implicit representation for snapshot hyperspectral reconstruction",
    packages=find_packages(exclude=["examples", "examples.*"]),
    package_data={"mgir": ["env/*.ini", "env/*.json", "tests/golden/*.json"]},
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scikit-image>=0.19",
        "python-dotenv~=1.0.0",
    ],
    extras_require={
        "test": ["pytest>=7.0", "hypothesis>=6.0"],
    },
    entry_points={
        "console_scripts": ["mgir=mgir.cli:main"],
    },
)
