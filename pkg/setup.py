from setuptools import setup, find_packages

setup(name='cfmediate',
      version='0.1.0',
      description='Exact counterfactual mediation analysis (direct, indirect and path-specific effects) over discrete structural causal models.',
      license='BSD-3-Clause',
      packages=['cfmediate'],
      package_data={'cfmediate': ['default_models/*.json']},
      include_package_data=True,
      python_requires='>=3.8',
      install_requires=['numpy', 'scipy', 'pandas>=1.5', 'networkx>=2.4',
          'pyyaml>=5.1'],
      extras_require={'tests': ['pytest']},
      entry_points={'console_scripts': [
          'cfmediate=cfmediate.run_model:main']},
      zip_safe=False)
