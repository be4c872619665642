'''setup.py -- itpcqa package information

ref: `Packaging Python Projects`__

__ https://packaging.python.org/en/latest/tutorials/packaging-projects/

'''

__author__ = 'itpcqa developers <itpcqa@example.org>'
__contact__ = 'https://example.org/itpcqa'
__license__ = 'Apache 2'

import warnings


def main(cwd, version_info, setup, find_packages):
    if version_info < (3, 8, 0):
        warnings.warn('python 3.8 required')

    source = (cwd / __file__).parent
    README = (source / 'README.rst').read_text()
    version = [line.split("'")[1]
               for line in (source / 'itpcqa' / '__init__.py')
               .read_text().splitlines()
               if line.startswith('__version__')][0]

    requires = [line.strip()
                for line in (source / 'requirements.txt')
                .read_text().splitlines()
                if line.strip() and not line.startswith('#')
                and not line.startswith(('pytest', 'flake8'))]

    [author, author_email] = [part[:-1] for part in __author__.split('<', 1)]
    setup(name='itpcqa',
          version=version,
          description=README.split('\n', 1)[0],
          long_description=README,
          classifiers=[
            "Programming Language :: Python :: 3",
            "Topic :: Scientific/Engineering :: Image Recognition",
          ],
          author=author.strip(),
          author_email=author_email,
          url=__contact__,
          license=__license__,
          keywords='point cloud quality assessment domain adaptation',
          packages=find_packages(),
          include_package_data=True,
          zip_safe=False,
          python_requires='>=3.8',
          install_requires=requires,
          extras_require={
              'testing': ['pytest', 'flake8'],
          })


if __name__ == '__main__':
    def _script():
        # Access ambient authority only when invoked as a script.
        # See devdoc/ocaps.rst
        from pathlib import Path
        from sys import version_info

        from setuptools import setup, find_packages

        main(Path('.'), version_info, setup, find_packages)

    _script()
