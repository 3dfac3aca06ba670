# Configuration file for the Sphinx documentation builder.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Path setup --------------------------------------------------------------

import os
import sys
sys.path.insert(0, os.path.abspath('../'))


# -- Project information -----------------------------------------------------

project = 'msdhawkes'


# -- General configuration ---------------------------------------------------

extensions = [
    'myst_parser',
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.autosummary',
    'sphinx.ext.viewcode',
    'sphinx.ext.imgmath',
    'sphinx.ext.intersphinx',
    'sphinx_autodoc_typehints',
    'autoclasstoc',
]

templates_path = ['_templates']
exclude_patterns = ['_build']


# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
# don't show the "View page source" link in the RTD theme
html_show_sourcelink = False
# use svg in imgmath extension
imgmath_image_format = 'svg'
intersphinx_mapping = {
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'pandas': ('https://pandas.pydata.org/docs/', None),
}
# the package's heavy imports are not needed to render the docs
autodoc_mock_imports = ['torch']

# In the main body of an autoclass directive, insert both the class' and the __init__ method's docstring
autoclass_content = 'both'
