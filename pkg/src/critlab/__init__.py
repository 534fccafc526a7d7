"""critlab: SDEs with critical Lorentz-space drifts, at desk scale."""

from critlab.kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
