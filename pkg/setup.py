"""
Setup file for weedipp
License:  BSD 2-Clause
"""

import setuptools  # pragma: no cover


def readme():
    with open('README.md') as f:
        return f.read()


setuptools.setup(  # pragma: no cover
      name='weedipp',
      description='Informative path planning for UAV weed classification: planner, baselines and benchmark harness',
      long_description=readme(),
      long_description_content_type="text/markdown",
      packages=setuptools.find_packages(exclude=['tests']),
      package_data={'weedipp': ['data/configs/*.yaml']},
      license='BSD 2-Clause',
      python_requires='>=3.8',
      install_requires=[
          'click>=8.0.1',
          'numpy>=1.21.2',
          'pandas>=1.3.2',
          'PyYAML>=5.4',
          'xarray>=0.19.0',
      ],
      extras_require={
          'dev': [
              'build>=0.5.1',
              'pytest>=6.2.4',
              'recommonmark>=0.7.1',
              'sphinx>=3.5.1',
              'sphinx-rtd-theme>=0.5.1',
          ]
      },
      entry_points={
          'console_scripts': [
              'weedipp = weedipp.scripts.weedipp:weedipp_cli',
          ],
      },
)
