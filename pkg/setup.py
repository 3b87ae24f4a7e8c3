from setuptools import setup, find_packages


setup(
    name='amde',
    version='0.1.0',
    description='Occlusion-robust metric embeddings with an adaptive '
                'nearest-neighbor loss, trained at desk scale',
    packages=find_packages(exclude=('tests', 'tests.*', 'examples',
                                    'examples.*')),
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.20',
        'tqdm>=4.40',
    ],
    extras_require={
        'test': ['pytest>=6.0'],
        'docs': ['sphinx', 'sphinx_rtd_theme'],
    },
    entry_points={
        'console_scripts': ['amde=amde.engine.cli:main'],
    },
)
