# itpcqa documentation build configuration file
#
# Only the settings that differ from sphinx-quickstart defaults.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode', 'sphinx.ext.todo']
todo_include_todos = True

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'itpcqa'
copyright = '2026, itpcqa developers'
version = '0.1'
release = '0.1.0'

exclude_patterns = ['_build']
pygments_style = 'sphinx'

html_theme = 'default'
html_static_path = ['_static']
htmlhelp_basename = 'itpcqadoc'

man_pages = [
    ('index', 'itpcqa', 'itpcqa Documentation',
     ['itpcqa developers'], 1)
]


def skip(app, what, name, obj, skip, options):
    if name == "__init__":
        return False
    return skip


def setup(app):
    app.connect("autodoc-skip-member", skip)
