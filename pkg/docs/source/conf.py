# hetcon documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.
# type: ignore

import sphinx_rtd_theme


# -- General configuration ------------------------------------------------

extensions = ["autoapi.extension"]

autoapi_type = "python"
autoapi_dirs = ["../../src/hetcon"]

templates_path = ["_templates"]
autoapi_template_dir = "source/autoapi_templates"

# Remove warnings for auto API template.
exclude_patterns = ["autoapi_templates/index.rst"]

source_suffix = ".rst"

# The master toctree document.
master_doc = "index"

# General information about the project.
project = "hetcon"
project_copyright = "2026, hetcon developers"
author = "hetcon developers"

with open("../../VERSION") as f:
    version = f.read().strip()
release = version

pygments_style = "sphinx"

# -- Options for HTML output ----------------------------------------------

html_theme = "sphinx_rtd_theme"
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
html_static_path = []

htmlhelp_basename = "hetcondoc"

# -- Options for manual page output ---------------------------------------

man_pages = [(master_doc, "hetcon", "hetcon Documentation", [author], 1)]
