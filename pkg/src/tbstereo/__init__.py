"""Geometry, ground truth, matching and evaluation for top-bottom equirectangular stereo."""

__version__ = "0.1.0"
