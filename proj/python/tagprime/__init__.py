"""Conditional sequence tagging for relational structure extraction."""

from ._tagprime import *  # noqa: F401,F403
from ._tagprime import __doc__  # noqa: F401
