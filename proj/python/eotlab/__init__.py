"""Entropic optimal transport on regular grids.

Thin re-export of the compiled ``_eotlab`` extension.
"""

from ._eotlab import *  # noqa: F401,F403
from ._eotlab import __version__  # noqa: F401
