from pathlib import Path
import importlib.metadata

SOURCE = Path(__file__).parent

project = "tamed"
author = "The tamed developers"
copyright = "2026, " + author

release = importlib.metadata.version("tamed-navier-stokes")
version = ".".join(release.split(".")[:3])

language = "en"
default_role = "any"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosectionlabel",
    "sphinx.ext.doctest",
    "sphinx.ext.intersphinx",
    "sphinx.ext.napoleon",
    "sphinx.ext.todo",
    "sphinx_click",
    "sphinx_copybutton",
]

pygments_style = "lovelace"
pygments_dark_style = "one-dark"

html_theme = "furo"

rst_prolog = f"""
.. |version| replace:: {version}
"""


def _resolve_broken_refs(app, env, node, contnode):
    # Make `tamed foo` try `tamed-foo`, i.e. assume it's a CLI command
    if node["reftarget"].startswith("tamed "):
        return app.env.get_domain("std").resolve_any_xref(
            env,
            node["refdoc"],
            app.builder,
            node["reftarget"].replace(" ", "-"),
            node,
            contnode,
        )


def setup(app):
    app.connect("missing-reference", _resolve_broken_refs)


# = Extensions =

# -- autodoc --

autodoc_default_options = {
    "members": True,
    "member-order": "bysource",
}

# -- autosectionlabel --

autosectionlabel_prefix_document = True

# -- intersphinx --

intersphinx_mapping = {
    "attrs": ("https://www.attrs.org/en/stable/", None),
    "click": ("https://click.palletsprojects.com", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "python": ("https://docs.python.org/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}

# -- sphinx-copybutton --

copybutton_prompt_text = r">>> |\.\.\. |\$"
copybutton_prompt_is_regexp = True
