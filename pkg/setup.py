"""
lpqe packaging setup script
"""
import os

from setuptools import setup


def read(filename):
    """Read file's content"""
    try:
        with open(os.path.join(os.path.dirname(__file__), filename)) as f:
            return f.read()
    except IOError as err:
        print("I/O error while reading {0!r} ({1!s}): {2!s}".format(filename, err.errno, err.strerror))
        return "0.0.1"


requires = [
    'Click==8.1.7',
    'jinja2==3.1.4',
    'numpy==1.26.4',
    'pandas==2.1.4',
    'pid==3.0.4',
    'psutil==5.9.8',
    'pyyaml==6.0.1',
    'scipy==1.11.4'
]

setup(
    name='lpqe',
    version=read('lpqe/version.txt').strip(),
    description='Low-precision quantized embedding training toolkit',
    long_description=read('README.md'),
    long_description_content_type='text/markdown',
    license="GNU GPLv3",
    platforms='Posix;',
    python_requires='>=3.8',
    install_requires=requires,
    extras_require={'test': ['pytest==7.4.4']},
    packages=['lpqe', 'lpqe.actions', 'lpqe.commands', 'lpqe.quant', 'lpqe.session', 'lpqe.train', 'lpqe.utils',
              'lpqe.templates'],
    package_data={'lpqe': ['version.txt'], 'lpqe.templates': ['*']},
    entry_points='''
        [console_scripts]
        lpqe=lpqe.lpqe:main
    '''
)
