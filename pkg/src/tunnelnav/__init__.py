"""Tunnel-following navigation for a multirotor carrying two tilted 2D LiDARs."""

from .errors import TunnelNavError

__version__ = "0.1.0"

__all__ = ["TunnelNavError", "__version__"]
