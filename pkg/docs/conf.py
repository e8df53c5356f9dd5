# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.
#
# This file does only contain a selection of the most common options. For a
# full list see the documentation:
# http://www.sphinx-doc.org/en/stable/config

# -- Path setup --------------------------------------------------------------

import os
import sys

sys.path.insert(0, os.path.abspath(".."))


# -- Project information -----------------------------------------------------

project = "dualmatch"
copyright = ("2024, The dualmatch Developers. Project structure based on the "
             "Computational Molecular Science Python Cookiecutter version 1.0")
author = "The dualmatch Developers"

# The short X.Y version
version = "0.1"
# The full version, including alpha/beta/rc tags
release = "0.1.0"


# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "sphinx.ext.mathjax",
]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"
language = "en"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
pygments_style = "sphinx"

autodoc_member_order = "bysource"
napoleon_numpy_docstring = True


# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
html_static_path = ["_static"]
htmlhelp_basename = "dualmatchdoc"


# -- Options for LaTeX output ------------------------------------------------

latex_documents = [
    (master_doc, "dualmatch.tex", "dualmatch Documentation", "dualmatch", "manual"),
]


# -- Options for manual page output ------------------------------------------

man_pages = [
    (master_doc, "dualmatch", "dualmatch Documentation", [author], 1)
]
