"""Poisson-Voronoi volume approximation laboratory."""

from .geometry import ConvexBody, Window, unit_ball_volume

__version__ = "0.1.0"

__all__ = ["ConvexBody", "Window", "unit_ball_volume", "__version__"]
