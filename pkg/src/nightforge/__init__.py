"""Synthetic low-light RGB-D pairs, fusion kernels and depth metrics."""

from nightforge.errors import NightforgeError

__version__ = "0.1.0"

__all__ = ["NightforgeError", "__version__"]
