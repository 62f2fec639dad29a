# Sphinx configuration for the callaudit documentation.
# Options: https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys
from datetime import datetime

sys.path.insert(0, os.path.abspath("../../"))

from callaudit import VERSION, VERSION_SHORT  # noqa: E402

# -- Project information -----------------------------------------------------

project = "callaudit"
copyright = f"{datetime.today().year}, callaudit developers"
author = "callaudit developers"
version = VERSION_SHORT
release = VERSION

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "myst_parser",
    "sphinx.ext.intersphinx",
    "sphinx.ext.viewcode",
    "sphinx_copybutton",
    "sphinx_autodoc_typehints",
]

myst_heading_anchors = 3
myst_enable_extensions = ["colon_fence"]
suppress_warnings = ["myst.header"]

templates_path = ["_templates"]
exclude_patterns = ["_build"]
source_suffix = [".rst", ".md"]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "pydantic": ("https://docs.pydantic.dev/latest", None),
}

# Used by the automodule blocks in api.md.
autodoc_default_options = {
    "members": True,
    "show-inheritance": True,
    "exclude-members": "model_config, model_fields, model_computed_fields",
}
autodoc_member_order = "bysource"
autodoc_type_aliases = {
    "Item": "callaudit.solidity_parser.Item",
}
typehints_defaults = "comma"

nitpick_ignore_regex = [(r"py:class", r"numpy\..*"), (r"py:class", r"funcparserlib\..*")]

# Example CLI output in the usage pages is copied without the prompt.
copybutton_prompt_text = r">> |\.\. |\$ "
copybutton_prompt_is_regexp = True

# -- Options for HTML output -------------------------------------------------

html_theme = "furo"
html_title = f"callaudit v{VERSION}"
