"""Python bindings for the bcdnet C++ library."""

from ._bcdnet import *  # noqa: F401,F403
from ._bcdnet import __version__  # noqa: F401
