from setuptools import setup, find_packages

setup(
    name="bcomd-simulator",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "sqlalchemy",
        "pydantic",
        "python-dotenv",
        "tqdm",
    ],
    extras_require={
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "bcomd = bcomd.main:main",
        ],
    },
)
