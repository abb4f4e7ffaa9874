from setuptools import setup, find_packages


setup(
    name="confspec-lab",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    py_modules=["main"],
    install_requires=[line.strip() for line in open("requirements.txt") if line.strip()],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["csl=main:main"]},
)
