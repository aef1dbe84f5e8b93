"""Learned-difficulty data selection with a diversity penalty."""

from ._scorefilter import *  # noqa: F401,F403
from ._scorefilter import __doc__  # noqa: F401

__version__ = "0.1.0"
