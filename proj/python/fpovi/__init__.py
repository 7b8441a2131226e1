"""Function-space particle-optimization variational inference for BNNs."""

from ._fpovi import *  # noqa: F401,F403
from ._fpovi import __doc__  # noqa: F401
