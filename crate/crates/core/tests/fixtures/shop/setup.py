from setuptools import setup, find_packages


def read_version():
    with open("shop/__init__.py") as fh:
        for line in fh:
            if line.startswith("__version__"):
                return line.split("=")[1].strip().strip('"')
    return "0.0.0"


setup(name="shop", version=read_version(), packages=find_packages())
