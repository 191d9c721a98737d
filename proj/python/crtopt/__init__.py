"""c-optimal designs for cluster randomised trials."""

from ._crtopt import *  # noqa: F401,F403
from ._crtopt import InfeasibleError, NumericError  # noqa: F401

__version__ = "0.1.0"
