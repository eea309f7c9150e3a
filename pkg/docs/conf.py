# Sphinx configuration for the weedipp documentation.

import os
import sys
sys.path.insert(0, os.path.abspath('../'))
import weedipp


project = 'weedipp'
copyright = '2026, weedipp developers'
author = 'weedipp developers'

version = weedipp.__version__
release = weedipp.__version__

extensions = [
    'recommonmark',
    'sphinx.ext.napoleon',
    'sphinx.ext.autodoc',
    'sphinx_rtd_theme'
]

# Keep the order of the source files so the API page reads bottom-up like the package.
autodoc_member_order = 'bysource'

templates_path = ['_templates']
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']
