"""
The CLI for tamed, a spectral solver for tamed Navier-Stokes flow.
"""

from tamed import _cli

_cli.main()
