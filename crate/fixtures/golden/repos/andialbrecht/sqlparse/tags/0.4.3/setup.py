import re

from setuptools import find_packages, setup

with open('sqlparse/__init__.py') as f:
    VERSION = re.search(r"__version__ = '([^']+)'", f.read()).group(1)

setup(
    name='sqlparse',
    version=VERSION,
    description='A non-validating SQL parser.',
    packages=find_packages(exclude=('tests',)),
    python_requires='>=3.5',
)
