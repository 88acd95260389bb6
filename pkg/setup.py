# coding: utf-8

""" Universal data anomaly detection """

import os
import re
import sys

try:
    from setuptools import setup

except ImportError:
    from distutils.core import setup


major, minor1, minor2, release, serial =  sys.version_info

readfile_kwargs = {"encoding": "utf-8"} if major >= 3 else {}

def readfile(filename):
    with open(filename, **readfile_kwargs) as fp:
        contents = fp.read()
    return contents

version_regex = re.compile("__version__ = \"(.*?)\"")
contents = readfile(os.path.join(
    os.path.dirname(os.path.abspath(__file__)),
    "uadetect",
    "__init__.py"))

version = version_regex.findall(contents)[0]

setup(name="uadetect",
      version=version,
      packages=["uadetect"],
      license="MIT",
      description="Universal anomaly detection with a learned inverse "
                  "generator and a coincidence test for uniformity.",
      long_description=readfile(os.path.join(os.path.dirname(__file__), "README.md")),
      long_description_content_type="text/markdown",
      python_requires=">=3.8",
      install_requires=[
        "numpy",
        "scipy",
        "astropy",
        "scikit-learn",
      ],
      extras_require={
        "test": ["pytest"],
      },
      entry_points={
        "console_scripts": ["uadetect=uadetect.cli:main"],
      },
     )
