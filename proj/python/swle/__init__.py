"""Score-based weighted likelihood estimation for exponential-dispersion GLMs."""
from ._swle import *  # noqa: F401,F403
from ._swle import __doc__  # noqa: F401
