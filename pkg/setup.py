#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

import setuptools
from shallowdiffusion.version import __version__

with open('README.md') as fh:
    long_description = fh.read()

setuptools.setup(
    name='shallowdiffusion',
    version=__version__,
    description='Denoising score matching with shallow ReLU networks on low-dimensional targets: per-timestep'
                ' training, exponential integrator sampling and dimension-adaptivity experiments.',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=setuptools.find_packages(exclude=['tests']),
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: GNU Lesser General Public License v3 (LGPLv3)',
        'Operating System :: POSIX :: Linux',
    ],
    python_requires='>=3.8',
    install_requires=['pyyaml', 'yamale', 'numpy', 'scipy', 'matplotlib'],
    extras_require={'test': ['pytest']},
    include_package_data=True,
    package_data={'shallowdiffusion': ['experiment_schema.yaml']},
    entry_points={
        'console_scripts': [
            'shallowdiffusion=shallowdiffusion.__main__:main',
        ]
    },
)
