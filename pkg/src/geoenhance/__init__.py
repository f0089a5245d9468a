"""Geometry-consistent multi-view enhancement of degraded rendered views."""
__version__ = "0.1.0"
